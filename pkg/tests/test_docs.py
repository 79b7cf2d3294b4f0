from pathlib import Path

from infharm.cli import HANDLERS

README = Path(__file__).resolve().parents[1] / "README.md"


def test_every_command_has_a_formula_row():
    text = README.read_text(encoding="utf-8")
    table = text.split("### Commands and the formulas they exercise", 1)[1]
    rows = [line for line in table.splitlines() if line.startswith("| `")]
    documented = {line.split("`")[1] for line in rows}
    assert documented == set(HANDLERS)
