import numpy as np
import pytest

from gpmini import fit_correction_distribution


@pytest.fixture(scope="session")
def corr_c1():
    """The default correction distribution (c = 1); fit once per session."""
    return fit_correction_distribution(1.0)


@pytest.fixture(scope="session")
def desk_replica():
    """Five-seed NN / FB(H=2) / FB(H=8) runs of the small simulation-study
    replica (n = 2000, 1600 train): the expensive shared harness behind the
    A5 criterion and the posterior-width property tests."""
    from gpmini import (AlgoConfig, ContinuousThetaPrior, KernelSpec, PriorSpec,
                        default_phi_bounds, run_chain, simulate_dataset)

    seeds = (101, 102, 103, 104, 105)
    iterations = 12800
    truth = dict(beta=np.array([0.0, 1.0, -5.0]), sigma2=1.0, omega=0.5, phi=0.236)
    datasets = {}
    chains = {"nn": {}, "fb2": {}, "fb8": {}}
    kernels = {}
    for seed in seeds:
        ds = simulate_dataset(n=2000, beta=truth["beta"], sigma2=truth["sigma2"],
                              omega=truth["omega"], phi=truth["phi"], seed=seed)
        datasets[seed] = ds
        train = ds.train_view()
        lo, hi = default_phi_bounds(train.locations)
        kernel = KernelSpec("exponential", lo, hi)
        kernels[seed] = kernel
        priors = PriorSpec(beta_mean=np.zeros(3), beta_var=np.full(3, 1000.0),
                           sigma2_shape=0.01, sigma2_rate=0.01,
                           theta=ContinuousThetaPrior(variance=3.0))
        common = dict(m_neighbors=15, seed=seed)
        runs = {
            "nn": AlgoConfig(algorithm="nn", iterations=iterations, **common),
            "fb2": AlgoConfig(algorithm="fb", epochs=iterations // 2, batches=2, **common),
            "fb8": AlgoConfig(algorithm="fb", epochs=iterations // 8, batches=8, **common),
        }
        for name, cfg in runs.items():
            chains[name][seed] = run_chain(train, cfg, priors, kernel)
    return {"seeds": seeds, "truth": truth, "datasets": datasets,
            "chains": chains, "kernels": kernels}
