# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------

project = "od-enclosure"
copyright = "2024, od-enclosure developers"
author = "od-enclosure developers"

master_doc = "index"

# -- General configuration ---------------------------------------------------

extensions = [
    "myst_parser",
    "sphinx_copybutton",
    "sphinx_book_theme",
    "sphinx.ext.intersphinx",
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
]

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

myst_enable_extensions = [
    "amsmath",
    "colon_fence",
    "deflist",
    "dollarmath",
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
    "shapely": ("https://shapely.readthedocs.io/en/stable", None),
}
intersphinx_cache_limit = 5

# ignore these type annotations
nitpick_ignore = [
    ("py:class", klass)
    for klass in [
        "Path",
        "np.ndarray",
        "numpy.ndarray",
        "BaseGeometry",
        "RunLogger",
        "Direction",
        "Mesh",
        "MediumSpec",
        "EnclosureConfig",
        "BasisKind",
        "typing_extensions.Literal",
        "evanescent",
        "plane-wave",
        "fundamental-solution",
    ]
]

# -- Options for HTML output -------------------------------------------------

html_title = "od-enclosure"
html_theme = "sphinx_book_theme"
html_theme_options = {
    "home_page_in_toc": True,
    "path_to_docs": "docs",
    "show_navbar_depth": 1,
    "navigation_with_keys": False,
}

copybutton_selector = "div.highlight pre"


def setup(app):
    """Add functions to the Sphinx setup."""
    import re
    from textwrap import shorten
    from typing import cast

    from docutils import nodes
    from docutils.parsers.rst import directives
    from sphinx.application import Sphinx
    from sphinx.util.docutils import SphinxDirective

    from od_enclosure.cli import create_cli
    from od_enclosure.core.config import EnclosureConfig, Section

    app = cast(Sphinx, app)

    class OdencConfigDirective(SphinxDirective):
        """Render the configuration fields of one section as a table."""

        option_spec = {
            "section": lambda x: directives.choice(x, [s.name for s in Section]),
        }

        @staticmethod
        def field_default(value):
            return shorten(repr(value), width=24, placeholder="...")

        @staticmethod
        def field_type(field):
            # annotations are strings under postponed evaluation
            return re.sub(r"\b(typing|typing_extensions)\.", "", str(field.type))

        def run(self):
            """Run the directive."""
            text = [
                "```````{list-table}",
                ":header-rows: 1",
                "",
                "* - Name",
                "  - Type",
                "  - Default",
                "  - Description",
            ]
            count = 0
            for name, value, field in EnclosureConfig().as_triple():
                sections = field.metadata.get("sections") or ()
                if "section" in self.options and Section[self.options["section"]] not in sections:
                    continue
                description = field.metadata.get("help", "").replace("\n", " ")
                text.extend(
                    [
                        f"* - `{name}`",
                        f"  - `{self.field_type(field)}`",
                        f"  - `{self.field_default(value)}`",
                        f"  - {description}",
                    ]
                )
                count += 1

            if not count:
                return []

            text.append("```````")
            node = nodes.Element()
            self.state.nested_parse(text, 0, node)
            return node.children

    class OdencCliHelpDirective(SphinxDirective):
        """Directive to print the help of one ``odenc`` command."""

        required_arguments = 1

        def run(self):
            """Run the directive."""
            cli = create_cli()
            commands = next(
                action for action in cli._actions if action.dest == "command"  # noqa: SLF001
            )
            text = commands.choices[self.arguments[0]].format_help()
            node = nodes.literal_block(text, text)
            node["language"] = "none"
            return [node]

    app.add_directive("odenc-config", OdencConfigDirective)
    app.add_directive("odenc-cli-help", OdencCliHelpDirective)
