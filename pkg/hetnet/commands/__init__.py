"""
Subcommands of the hetnet CLI, one module per command family
"""
from pathlib import Path

from hetnet.config import RunConfig
from hetnet.errors import OutputError
from hetnet.ledger import RunLedger
from hetnet.records import text_sha256
from hetnet.scenario import Scenario, generate_scenario
from hetnet.seeding import derive_seed
from hetnet.svm import SvmModel


def read_scenario(path: Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    return Scenario.from_json(text)


def read_model(path: Path) -> SvmModel:
    try:
        return SvmModel.load(path)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def scenario_from_config(config: RunConfig) -> Scenario:
    return generate_scenario(config.scenario, derive_seed(config.seed, "scenario"))


def new_ledger(command: str, config: RunConfig) -> RunLedger:
    return RunLedger(
        {
            "command": command,
            "seed": config.seed,
            "config_sha256": text_sha256(config.model_dump_json()),
        }
    )
