from dotenv import load_dotenv
import typer

from bido.routers import convert, corpus, experiments, inspect, training
from bido.version import __version__

load_dotenv()

app = typer.Typer(
    name="bido",
    help="Image-based Android malware detection from DEX and manifest bytes.",
    no_args_is_help=True,
    add_completion=False,
)

for module in (convert, corpus, training, inspect, experiments):
    app.registered_commands.extend(module.router.registered_commands)


def _version(value: bool):
    if value:
        typer.echo(__version__)
        raise typer.Exit()


@app.callback()
def main(
    version: bool = typer.Option(
        False, "--version", callback=_version, is_eager=True, help="Show the version and exit."
    ),
):
    pass


if __name__ == "__main__":
    app()
