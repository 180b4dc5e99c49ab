# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
# http://www.sphinx-doc.org/en/master/config

import os
import sys

sys.path.insert(0, os.path.abspath('../..'))

# can only import after inserting path
from gaugelab.version import __version__, short_version

# -- Project information -----------------------------------------------------

project = 'gaugelab'
copyright = '2020, Dragorhast'
author = 'Dragorhast'

version = short_version
release = __version__

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.todo',
    'sphinx.ext.viewcode',
    'sphinx_autodoc_typehints',
    'sphinxcontrib.mermaid'
]

source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = []
pygments_style = None

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'gaugelab'

# -- Extension configuration -------------------------------------------------

autodoc_default_options = {
    'members': None,
    'member-order': 'bysource',
    'special-members': '__init__',
    'undoc-members': None,
    'exclude-members': '__weakref__',
    'show-inheritance': None
}

# numpy arrays in signatures are noisy
autodoc_typehints = 'description'

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'marshmallow': ('https://marshmallow.readthedocs.io/en/latest/', None)
}

todo_include_todos = True

add_module_names = False
