"""Config commands: show, set and reset the user settings file."""

import tomli_w
import typer
from rich.markup import escape

from ...config import ConfigError, get_config, parse_override, settings_file
from ...utils.output import MessageType, get_formatter
from ..error_handler import handles_errors


def _format_sections(sections: dict) -> str:
    return escape(tomli_w.dumps(sections).strip())


@handles_errors
def config_show_command(
    section: str = typer.Argument(None, help="Show only a specific section"),
) -> None:
    """Show current settings."""
    output = get_formatter()
    config = get_config()
    sections = config.get_all_sections()
    if section:
        if section not in sections:
            raise ConfigError(
                f"Section '{section}' not found; available: {', '.join(sections)}"
            )
        sections = {section: sections[section]}
    title = f"Configuration ({config.config_file_path})"
    output.print_box(_format_sections(sections), MessageType.INFO, title)


@handles_errors
def config_set_command(
    key_path: str = typer.Argument(
        ..., help="Setting to change, e.g. 'compute.threads' or 'logging.level'"
    ),
    value: str = typer.Argument(..., help="New value, read as a TOML value"),
) -> None:
    """Set a value in the settings file."""
    section, key, converted = parse_override(f"{key_path}={value}")
    config = get_config()
    config.set(section, key, converted)
    get_formatter().print_box(
        f"Set {section}.{key} = {converted!r}\nSaved to {config.config_file_path}",
        MessageType.SUCCESS,
        "Configuration Updated",
    )


@handles_errors
def config_reset_command(
    yes: bool = typer.Option(False, "--yes", "-y", help="Skip confirmation prompt"),
) -> None:
    """Reset the settings file to defaults."""
    output = get_formatter()
    if not yes and not typer.confirm("Reset ALL settings to their defaults?"):
        output.print_box("Configuration reset cancelled.", MessageType.INFO)
        raise typer.Exit()
    try:
        config = get_config()
    except ConfigError:
        # An invalid file cannot be loaded; start from a fresh one.
        settings_file().unlink(missing_ok=True)
        config = get_config()
    config.reset_to_defaults()
    output.print_box(
        f"Settings reset to defaults in {config.config_file_path}",
        MessageType.SUCCESS,
        "Configuration Reset",
    )
