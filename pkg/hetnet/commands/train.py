"""
`hetnet train`: label scenarios with JUR and fit the association SVM
"""
import argparse
import logging
from pathlib import Path
from typing import List

from hetnet.commands import read_scenario
from hetnet.config import RunConfig
from hetnet.errors import ConfigError
from hetnet.lhm import LabelledCorpus, TrainedModel, build_training_data, fit_lhm_model, train_lhm_model
from hetnet.scenario import Scenario, generate_scenario
from hetnet.svm import TrainingSet

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train the LHM association model")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--data", type=Path, help="labelled feature CSV")
    source.add_argument(
        "--from-scenarios",
        nargs="+",
        metavar="SEED_OR_FILE",
        help="scenario seeds or scenario JSON files to label with JUR",
    )
    parser.add_argument("--c", type=float, help="override lhm.svm.c")
    parser.add_argument("--gamma", type=float, help="override lhm.svm.kernel_gamma")
    parser.add_argument("--cv", action="store_true", help="pick (c, gamma) by k-fold grid search")
    parser.add_argument("--folds", type=int, help="number of cross-validation folds")
    parser.add_argument("--model-out", type=Path, help="model file (default <out>/model.json)")
    parser.add_argument("--data-out", type=Path, help="also write the labelled corpus as CSV")
    parser.set_defaults(handler=cmd_train)


def _scenarios_from(items: List[str], config: RunConfig) -> List[Scenario]:
    """Each item is a scenario JSON path or an integer seed"""
    corpus = config.lhm.training_scenarios
    scenario_cfg = config.scenario
    if corpus is not None:
        scenario_cfg = scenario_cfg.model_copy(update={"n_users": corpus.n_users})
    scenarios = []
    for item in items:
        path = Path(item)
        if path.suffix == ".json" or path.exists():
            scenarios.append(read_scenario(path))
            continue
        try:
            seed = int(item)
        except ValueError:
            raise ConfigError(f"--from-scenarios: {item!r} is neither a file nor a seed") from None
        scenarios.append(generate_scenario(scenario_cfg, seed))
    return scenarios


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    if args.folds is not None and not args.cv:
        raise ConfigError("--folds needs --cv")
    if args.cv and args.folds is not None and args.folds < 2:
        raise ConfigError(f"cross-validation needs at least 2 folds, got {args.folds}")

    svm_updates = {}
    if args.c is not None:
        svm_updates["c"] = args.c
    if args.gamma is not None:
        svm_updates["kernel_gamma"] = args.gamma
    params = config.lhm.svm.model_validate({**config.lhm.svm.model_dump(), **svm_updates})
    jur_opts, cro_opts = config.solver.jur, config.solver.cro

    trained: TrainedModel
    if args.data is not None:
        corpus = LabelledCorpus(TrainingSet.load(args.data))
        trained = fit_lhm_model(corpus, params, config.seed, args.cv, args.folds)
    elif args.from_scenarios:
        scenarios = _scenarios_from(args.from_scenarios, config)
        corpus = build_training_data(scenarios, jur_opts, cro_opts, config.scenario.reference_power)
        trained = fit_lhm_model(corpus, params, config.seed, args.cv, args.folds)
    else:
        lhm_opts = config.lhm.model_copy(update={"svm": params})
        trained = train_lhm_model(lhm_opts, config.scenario, config.seed, args.cv, args.folds, jur_opts, cro_opts)

    model_out = args.model_out or config.output_dir / "model.json"
    trained.model.save(model_out)
    if args.data_out is not None:
        trained.corpus.data.save(args.data_out)
    logger.info("[TRAIN] model written to %s", model_out)

    mbs_rows, offload_rows = trained.corpus.data.label_counts()
    print(f"rows: {len(trained.corpus.data)} ({mbs_rows} MBS, {offload_rows} offloaded)")
    if trained.corpus.skipped:
        print(f"skipped scenarios: {trained.corpus.skipped} of {trained.corpus.scenarios}")
    print(f"training accuracy: {trained.training_accuracy:.2%}")
    if trained.validation_accuracy is not None:
        print(f"validation accuracy: {trained.validation_accuracy:.2%}")
    print(f"support vectors: {len(trained.model.support_vectors)} -> {model_out}")
    return 0
