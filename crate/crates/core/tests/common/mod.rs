//! Random networks and intensity matrices shared by the property suites.
#![allow(dead_code)]

use ctbn::cim::amalgamate_all;
use ctbn::cliquetree::{ApproxConfig, CliqueTree};
use ctbn::error::Result;
use ctbn::indexer::{StateIndexer, VarId};
use ctbn::linalg::{Matrix, ProbVector};
use ctbn::marginalize::{marginalize_cim, MarginalizationConfig, MarginalizationMethod, ReferenceDistribution};
use ctbn::markov::{validate_intensity, IntensityMatrix};
use ctbn::model::{Ctbn, CtbnBuilder};
use rand::Rng;

pub fn random_rates<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let mut total = 0.0;
        for j in 0..n {
            if i != j {
                let r = scale * rng.random_range(0.05..1.0);
                m[(i, j)] = r;
                total += r;
            }
        }
        m[(i, i)] = -total;
    }
    m
}

pub fn random_intensity<R: Rng>(rng: &mut R) -> IntensityMatrix {
    let n = rng.random_range(1..=6);
    let scale = 10f64.powf(rng.random_range(-1.0..1.7));
    let indexer = StateIndexer::single(VarId(0), n).unwrap();
    IntensityMatrix::new(indexer, random_rates(rng, n, scale)).unwrap()
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// A network of two to four variables with two or three values each,
/// random (possibly cyclic) dynamics parents and an acyclic initial network.
pub fn random_model<R: Rng>(rng: &mut R) -> Ctbn {
    let n = rng.random_range(2..=4);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
    let mut b = CtbnBuilder::new();
    let names = ["A", "B", "C", "D"];
    let ids: Vec<VarId> = (0..n)
        .map(|i| {
            let values: Vec<String> = (0..cards[i]).map(|v| format!("v{v}")).collect();
            let values: Vec<&str> = values.iter().map(String::as_str).collect();
            b.variable(names[i], &values)
        })
        .collect();
    for i in 0..n {
        let mut parents: Vec<VarId> = (0..n).filter(|&j| j != i && rng.random_bool(0.45)).map(|j| ids[j]).collect();
        parents.truncate(2);
        let contexts: usize = parents.iter().map(|p| cards[p.0]).product();
        let scale = rng.random_range(0.2..5.0);
        let components = (0..contexts).map(|_| random_rates(rng, cards[i], scale)).collect();
        b.dynamics(ids[i], &parents, components);
        let init_parents: Vec<VarId> = (0..i).filter(|_| rng.random_bool(0.4)).map(|j| ids[j]).take(2).collect();
        let rows = init_parents.iter().map(|p| cards[p.0]).product::<usize>();
        b.initial(ids[i], &init_parents, (0..rows).map(|_| random_distribution(rng, cards[i])).collect());
    }
    b.build().unwrap()
}

pub fn check_intensity(q: &IntensityMatrix) -> Result<()> {
    validate_intensity(q.entries(), q.indexer())
}

pub fn check_cim(cim: &ctbn::cim::ConditionalIntensityMatrix) -> Result<()> {
    cim.components().iter().try_for_each(check_intensity)
}

/// Every intensity matrix produced from one random network: the amalgamated
/// joint, its marginalizations onto random variable subsets under both
/// methods, and all clique tree messages and local dynamics. Returns how
/// many matrices were checked.
pub fn exercise_model<R: Rng>(model: &Ctbn, rng: &mut R) -> Result<usize> {
    let mut checked = 0;
    let joint = amalgamate_all(model.cims())?;
    check_cim(&joint)?;
    checked += joint.components().len();
    let vars: Vec<VarId> = model.var_ids().collect();
    let eliminate: Vec<VarId> = vars.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
    let reference = ReferenceDistribution::Shared(ProbVector::new(random_distribution(rng, joint.subject().size()))?);
    for method in [MarginalizationMethod::Linear, MarginalizationMethod::Subsystem] {
        let cfg = MarginalizationConfig { method, reference: reference.clone(), uniform_fallback: false };
        let reduced = marginalize_cim(&joint, &eliminate, &cfg)?;
        check_cim(&reduced)?;
        checked += reduced.components().len();
        let config = ApproxConfig {
            method,
            tstar: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..1.0) },
            ..ApproxConfig::default()
        };
        let mut tree = CliqueTree::build(model, config)?;
        tree.calibrate_dynamics()?;
        tree.advance_to(rng.random_range(0.0..2.0))?;
        tree.calibrate_dynamics()?;
        for &(a, b) in tree.edges() {
            for (from, to) in [(a, b), (b, a)] {
                let m = tree.message(from, to).expect("calibrated tree has all messages");
                check_cim(m)?;
                checked += m.components().len();
            }
        }
        for clique in tree.cliques() {
            check_intensity(clique.dynamics().expect("calibrated"))?;
            checked += 1;
        }
    }
    Ok(checked)
}
