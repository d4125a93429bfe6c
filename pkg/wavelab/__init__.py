def __getattr__(name: str):
    if name == "ModelParams":
        from .exponents import ModelParams

        return ModelParams

    elif name == "SolverConfig":
        from .solver import SolverConfig

        return SolverConfig

    elif name == "evolve":
        from .solver import evolve

        return evolve

    elif name == "ExperimentConfig":
        from .lab import ExperimentConfig

        return ExperimentConfig

    elif name == "run":
        from .lab import run

        return run

    else:
        raise AttributeError(name)


__all__ = [
    "ExperimentConfig",
    "ModelParams",
    "SolverConfig",
    "evolve",
    "run",
]
