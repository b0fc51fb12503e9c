#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# ernf documentation build configuration file
#
import os
import sys
sys.path.insert(0, os.path.abspath(os.pardir))


# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode'
]
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'ernf'
copyright = '2026, ernf developers'
author = 'ernf developers'
version = '0.1'
release = '0.1.0'

language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'
todo_include_todos = False

# numpy style docstrings with raw string prefixes
napoleon_numpy_docstring = True
napoleon_google_docstring = False


# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'ernfdoc'


# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'ernf', 'ernf Documentation', [author], 1)
]
