# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/stable/config

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))


# -- Project information -----------------------------------------------------

project = 'hamspace'
copyright = u'2026, hamspace developers'
author = u'hamspace developers'

# The short X.Y version
version = '0.1'
# The full version, including alpha/beta/rc tags
release = '0.1.0'


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.doctest',
]

templates_path = ['.templates']

source_suffix = '.rst'

master_doc = 'index'

language = None

exclude_patterns = []

pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'

html_static_path = []


# -- Options for HTMLHelp output ---------------------------------------------

htmlhelp_basename = 'hamspacedoc'


# -- Options for LaTeX output ------------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc, 'hamspace.tex', 'hamspace Documentation', author, 'manual'),
]


# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, 'hamspace', 'hamspace Documentation', [author], 1)
]


# -- Options for Texinfo output ----------------------------------------------

texinfo_documents = [
    (master_doc, 'hamspace', 'hamspace Documentation',
     author, 'hamspace', 'Learned hash codes and exact multi-index search in Hamming space.',
     'Miscellaneous'),
]


# -- Extension configuration -------------------------------------------------

autodoc_member_order = 'bysource'
