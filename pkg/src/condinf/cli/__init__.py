"""Command-line experiment runner (``condinf <subcommand>``)."""
