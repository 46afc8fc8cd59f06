import logging

def setup_logging(debug=False):
    """Set up logging configuration for the tprseg scripts."""

    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    # Set the logging level for specific libraries to WARNING to suppress DEBUG messages
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
