# -*- coding: utf-8 -*-
#
# perchs documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing
# dir.

import os
import sys

# the package lives one level up
sys.path.insert(0, os.path.abspath('..'))

import perchs

# -- General configuration ----------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.intersphinx',
              'sphinx.ext.mathjax']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = u'perchs'
copyright = u'perchs developers 2026'

# The short X.Y version.
version = perchs.VERSION
# The full version, including alpha/beta/rc tags.
release = perchs.VERSION

exclude_patterns = ['_build']

pygments_style = 'sphinx'

# members are documented in source order, the order the modules read best in
autodoc_member_order = 'bysource'

# -- Options for HTML output --------------------------------------------------

html_theme = 'default'

html_static_path = ['_static']

htmlhelp_basename = 'perchsdoc'

# -- Options for LaTeX output -------------------------------------------------

latex_elements = {}

latex_documents = [
    ('index', 'perchs.tex', u'perchs Documentation',
     u'perchs developers', 'manual'),
]

# -- Options for manual page output -------------------------------------------

man_pages = [
    ('index', 'perchs', u'perchs Documentation',
     [u'perchs developers'], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
    'scipy': ('https://docs.scipy.org/doc/scipy', None),
}
