#![allow(dead_code)]

use binreg::model::{synthetic_dataset, Dataset, Link, Prior, PriorKind, PosteriorTarget};
use binreg_oracle as oracle;
use std::path::PathBuf;

pub struct Case {
    pub data: Dataset,
    pub target: PosteriorTarget,
    pub problem: oracle::Problem,
}

/// Intercept plus one covariate; small enough for tensor-grid quadrature.
pub fn synthetic_case(n: usize, link: Link, kind: PriorKind, seed: u64) -> Case {
    let data = synthetic_dataset(n, &[-0.3, 1.2], link, seed);
    case_from(data, link, kind)
}

pub fn case_from(data: Dataset, link: Link, kind: PriorKind) -> Case {
    let prior = Prior::default_for(kind, data.dim(), data.intercept);
    let target = PosteriorTarget::new(&data, prior.clone(), link).unwrap();
    let problem = oracle::Problem {
        y: data.y.iter().copied().collect(),
        x: data.x.row_iter().map(|r| r.iter().copied().collect()).collect(),
        link: match link {
            Link::Probit => oracle::Link::Probit,
            Link::Logit => oracle::Link::Logit,
        },
        prior: match kind {
            PriorKind::Gaussian => oracle::Prior::Gaussian((0..prior.dim()).map(|j| prior.gaussian_sd(j)).collect()),
            PriorKind::Cauchy => oracle::Prior::Cauchy(prior.scales.clone()),
        },
    };
    Case { data, target, problem }
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
