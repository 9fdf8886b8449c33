"""
# healthy-translate-cli

Command line entry point for healthy-translate. Run `healthy-translate --help` for the commands.
"""
