from glob import glob
import os
import sys

try:
    from setuptools import setup
except ImportError:
    print('Please install or upgrade setuptools or pip to continue')
    sys.exit(1)

# Check Python version
if sys.version_info < (3, 10):
    print('ernf requires Python 3.10 or greater to run')
    sys.exit(1)

# pull long description from README
with open('README.rst', 'r') as f:
    long_desc = f.read()

# pull out version and default name from module
main_ = {}
ver_path = os.path.join('ernf', '__init__.py')
with open(ver_path) as f:
    for line in f:
        if line.startswith('__version__'):
            exec(line, main_)

# get all scripts
scripts = glob(os.path.join('ernf', 'scripts', '*.py'))
scripts = [s for s in scripts if not os.path.basename(s).startswith('_')]
fmt = '{0} = ernf.scripts.{0}:main'
for i, script in enumerate(scripts):
    scripts[i] = fmt.format(os.path.splitext(os.path.basename(script))[0])

# call setup
setup(
    name='ernf',
    description='A desk scale audio driven talking head radiance field with ' +
                'tri-plane hash encoding, region attention and hand written adjoints.',
    long_description=long_desc,
    version=main_['__version__'],
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Environment :: Console',
        'License :: OSI Approved :: GNU General Public License v3 (GPLv3)',
        'Programming Language :: Python',
        'Intended Audience :: Science/Research',
        'Topic :: Multimedia :: Graphics :: 3D Rendering',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    packages=[
        'ernf',
        'ernf.encoding',
        'ernf.networks',
        'ernf.scene',
        'ernf.train',
        'ernf.scripts'
    ],
    entry_points={
        'console_scripts': scripts
    },
    include_package_data=True,
    package_data={
        'ernf': ['logging.conf']
    },
    install_requires=[
        'numpy',
        'scipy',
        'pillow>=9.0',
        'pyyaml',
        'tomli>=1.1.0; python_version < "3.11"'
    ],
    license='GPLv3',
    keywords=['Neural Radiance Fields', 'Hash Encoding', 'Talking Head', 'Volume Rendering']
)
