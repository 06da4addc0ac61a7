from bido.main import app

app(prog_name="bido")
