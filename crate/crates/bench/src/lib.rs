//! Fixtures shared by the benchmarks in `benches/`.

use proxdiv::{MixtureModel, ParamVector, Sample};

pub fn gaussian_sample(n: usize) -> Sample {
    MixtureModel::gaussian2()
        .sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), n, 42)
        .expect("valid parameters")
}

pub fn weibull_sample(n: usize) -> Sample {
    MixtureModel::weibull2()
        .sample_seeded(&ParamVector::new(0.35, 1.2, 2.0), n, 42)
        .expect("valid parameters")
}
