//! Closed-form finite-n moments and an exhaustive small-n oracle.
//!
//! The oracle enumerates every growth history, collapsed by tree shape:
//! all statistics are label-invariant, so the law of the shape is all that
//! matters, and at n = 12 there are only a few hundred rooted shapes.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{fmt_q, q};
use crate::models::Model;
use crate::tree::{EdgeTypeVector, PhyloTree};

pub const DEFAULT_ENUMERATION_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentSet {
    pub n: usize,
    pub model: Model,
    pub mean_a: BigRational,
    pub mean_b: BigRational,
    pub var_a: BigRational,
    pub var_b: BigRational,
    pub cov_ab: BigRational,
}

impl MomentSet {
    pub fn from_pmf(model: Model, pmf: &JointPmf) -> Self {
        let mut ea = BigRational::zero();
        let mut eb = BigRational::zero();
        let mut eaa = BigRational::zero();
        let mut ebb = BigRational::zero();
        let mut eab = BigRational::zero();
        for (&(a, b), p) in &pmf.probs {
            let a = q(a as i64, 1);
            let b = q(b as i64, 1);
            ea += &a * p;
            eb += &b * p;
            eaa += &a * &a * p;
            ebb += &b * &b * p;
            eab += &a * &b * p;
        }
        MomentSet {
            n: pmf.n,
            model,
            var_a: eaa - &ea * &ea,
            var_b: ebb - &eb * &eb,
            cov_ab: eab - &ea * &eb,
            mean_a: ea,
            mean_b: eb,
        }
    }

    /// `[E A, E B, Var A, Var B, Cov]` as "num/den" strings.
    pub fn to_strings(&self) -> [String; 5] {
        [
            fmt_q(&self.mean_a),
            fmt_q(&self.mean_b),
            fmt_q(&self.var_a),
            fmt_q(&self.var_b),
            fmt_q(&self.cov_ab),
        ]
    }
}

fn check_formula_range(n: usize) -> Result<()> {
    if n < 7 {
        return Err(Error::OutOfRange(format!(
            "closed-form moments hold for n >= 7 (got {n}); use enumerate_exact for small trees"
        )));
    }
    Ok(())
}

/// Exact moments of `(A_n, B_n)` under YHK, valid for `n >= 7`.
pub fn yhk_moments(n: usize) -> Result<MomentSet> {
    check_formula_range(n)?;
    let n = n as i64;
    Ok(MomentSet {
        n: n as usize,
        model: Model::Yhk,
        mean_a: q(n, 6),
        mean_b: q(n, 3),
        var_a: q(23 * n, 420),
        var_b: q(2 * n, 45),
        cov_ab: q(-n, 45),
    })
}

/// Exact moments of `(A_n, B_n)` under rooted PDA, valid for `n >= 7`.
pub fn pda_moments(n: usize) -> Result<MomentSet> {
    check_formula_range(n)?;
    let n = n as i64;
    let b = |x: i64| BigRational::from_integer(BigInt::from(x));
    let nn = b(n);
    let lin = |k: i64, c: i64| b(k) * &nn + b(c);
    let mean_a = &nn * lin(1, -1) * lin(1, -2) / (b(2) * lin(2, -3) * lin(2, -5));
    let mean_b = &nn * lin(1, -1) / (b(2) * lin(2, -3));
    let var_b = &nn * lin(1, -1) * lin(1, -2) * lin(1, -3) / (b(2) * lin(2, -3) * lin(2, -3) * lin(2, -5));
    let cubic = b(4) * &nn * &nn * &nn - b(40) * &nn * &nn + b(123) * &nn - b(110);
    let var_a = b(3) * cubic / (b(2) * lin(2, -5) * lin(2, -7) * lin(2, -9)) * &var_b;
    let cov_ab = -var_b.clone() / b(2 * n - 7);
    Ok(MomentSet {
        n: n as usize,
        model: Model::Pda,
        mean_a,
        mean_b,
        var_a,
        var_b,
        cov_ab,
    })
}

pub fn closed_form_moments(model: Model, n: usize) -> Result<MomentSet> {
    match model {
        Model::Yhk => yhk_moments(n),
        Model::Pda => pda_moments(n),
    }
}

/// Exact law of `(A, B)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointPmf {
    pub n: usize,
    pub probs: BTreeMap<(u64, u64), BigRational>,
}

impl JointPmf {
    pub fn total(&self) -> BigRational {
        self.probs.values().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn get(&self, a: u64, b: u64) -> BigRational {
        self.probs.get(&(a, b)).cloned().unwrap_or_else(BigRational::zero)
    }

    /// CSV with columns `a, b, p_num, p_den`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wtr.write_record(["a", "b", "p_num", "p_den"]).map_err(io)?;
        for (&(a, b), p) in &self.probs {
            wtr.write_record([
                a.to_string(),
                b.to_string(),
                p.numer().to_string(),
                p.denom().to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Output of [`enumerate_exact`].
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub ab: JointPmf,
    /// Law of the edge-type vector (4 entries for YHK, 6 for PDA). Empty when
    /// classification is undefined (unrooted trees below 6 leaves).
    pub edge_types: BTreeMap<EdgeTypeVector, BigRational>,
    /// Law of the tree shape, keyed by a canonical representative.
    pub shapes: Vec<(PhyloTree, BigRational)>,
}

/// Exact law of the terminal tree shape when `seed` is grown to `n` leaves.
pub fn enumerate_shapes(model: Model, seed: &PhyloTree, n: usize, cap: usize) -> Result<Vec<(PhyloTree, BigRational)>> {
    let m = seed.leaf_count();
    if m > n {
        return Err(Error::InvalidRange(format!("seed has {m} leaves, target {n}")));
    }
    if n > cap {
        return Err(Error::TooLarge(format!("enumeration to n = {n} exceeds cap {cap}")));
    }
    let mut layer: HashMap<String, (PhyloTree, BigRational)> = HashMap::new();
    layer.insert(seed.shape_key(), (seed.clone(), BigRational::one()));
    for _ in m..n {
        let mut next: HashMap<String, (PhyloTree, BigRational)> = HashMap::new();
        for (tree, p) in layer.into_values() {
            let edges: Vec<_> = match model {
                Model::Yhk => tree.pendant_edges().collect(),
                Model::Pda => tree.edges().collect(),
            };
            let w = p / q(edges.len() as i64, 1);
            let label = tree.max_label() + 1;
            for e in edges {
                let child = tree.with_leaf(e, label)?;
                let key = child.shape_key();
                next.entry(key)
                    .and_modify(|(_, acc)| *acc += &w)
                    .or_insert_with(|| (child, w.clone()));
            }
        }
        layer = next;
    }
    let mut out: Vec<(String, (PhyloTree, BigRational))> = layer.into_iter().collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out.into_iter().map(|(_, v)| v).collect())
}

/// Exact joint law of `(A_n, B_n)` and of the edge-type vector.
pub fn enumerate_exact(model: Model, seed: &PhyloTree, n: usize, cap: usize) -> Result<Enumeration> {
    let shapes = enumerate_shapes(model, seed, n, cap)?;
    let mut ab = BTreeMap::new();
    let mut edge_types = BTreeMap::new();
    for (tree, p) in &shapes {
        let key = (tree.count_pitchforks() as u64, tree.count_cherries() as u64);
        *ab.entry(key).or_insert_with(BigRational::zero) += p;
        if let Ok(v) = tree.classify_all_edges() {
            let v = EdgeTypeVector(v.0[..model.dim()].to_vec());
            *edge_types.entry(v).or_insert_with(BigRational::zero) += p;
        }
    }
    Ok(Enumeration {
        ab: JointPmf { n, probs: ab },
        edge_types,
        shapes,
    })
}

/// Split of the unrooted 6-leaf YHK tree into its two shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitialSplit {
    /// Probability of the two-pitchfork shape.
    pub p_first: BigRational,
    /// Probability of the three-cherry shape.
    pub p_second: BigRational,
    pub alpha_first: EdgeTypeVector,
    pub alpha_second: EdgeTypeVector,
}

/// Grows the rooted two-leaf tree to six leaves under YHK, unroots, and
/// splits by shape.
pub fn unrooted_initial_split() -> Result<InitialSplit> {
    let shapes = enumerate_shapes(Model::Yhk, &PhyloTree::two_leaf(), 6, DEFAULT_ENUMERATION_CAP)?;
    let mut by_vec: BTreeMap<EdgeTypeVector, BigRational> = BTreeMap::new();
    for (tree, p) in shapes {
        let alpha = tree.unroot()?.classify_pendant_edges()?;
        *by_vec.entry(alpha).or_insert_with(BigRational::zero) += p;
    }
    let first = EdgeTypeVector(vec![4, 0, 2, 0]);
    let second = EdgeTypeVector(vec![0, 6, 0, 0]);
    if by_vec.len() != 2 || !by_vec.contains_key(&first) || !by_vec.contains_key(&second) {
        return Err(Error::Invariant {
            replicate: 0,
            msg: format!("unexpected unrooted 6-leaf classes {by_vec:?}"),
        });
    }
    Ok(InitialSplit {
        p_first: by_vec[&first].clone(),
        p_second: by_vec[&second].clone(),
        alpha_first: first,
        alpha_second: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2() -> PhyloTree {
        PhyloTree::two_leaf()
    }

    #[test]
    fn yhk_closed_forms() {
        let m = yhk_moments(7).unwrap();
        assert_eq!((m.mean_a.clone(), m.mean_b.clone(), m.var_a.clone()), (q(7, 6), q(7, 3), q(161, 420)));
        let m = yhk_moments(420).unwrap();
        assert_eq!(m.var_a, q(23, 1));
        assert_eq!(m.cov_ab, q(-28, 3));
        assert!(matches!(yhk_moments(6), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn pda_closed_forms() {
        let m = pda_moments(7).unwrap();
        assert_eq!(m.mean_a, q(35, 33));
        assert_eq!(m.mean_b, q(21, 11));
        assert_eq!(m.var_a, q(326, 1089));
        assert_eq!(m.var_b, q(140, 363));
        assert_eq!(m.cov_ab, q(-20, 363));
        assert!(pda_moments(4).is_err());
    }

    #[test]
    fn pda_asymptotics() {
        let n = 1_000_000usize;
        let m = pda_moments(n).unwrap();
        let per_n = |x: &BigRational| x.to_f64_lossy() / n as f64;
        assert!((per_n(&m.var_a) - 3.0 / 64.0).abs() < 1e-5);
        assert!((per_n(&m.var_b) - 1.0 / 16.0).abs() < 1e-5);
        assert!(per_n(&m.cov_ab).abs() < 1e-5);
        assert!((per_n(&m.mean_a) - 1.0 / 8.0).abs() < 1e-5);
        assert!((per_n(&m.mean_b) - 1.0 / 4.0).abs() < 1e-5);
    }

    trait Lossy {
        fn to_f64_lossy(&self) -> f64;
    }
    impl Lossy for BigRational {
        fn to_f64_lossy(&self) -> f64 {
            crate::linalg::Scalar::to_f64(self)
        }
    }

    #[test]
    fn four_leaf_laws() {
        let y = enumerate_exact(Model::Yhk, &t2(), 4, 12).unwrap();
        assert_eq!(y.ab.get(1, 1), q(2, 3));
        assert_eq!(y.ab.get(0, 2), q(1, 3));
        let p = enumerate_exact(Model::Pda, &t2(), 4, 12).unwrap();
        assert_eq!(p.ab.get(1, 1), q(4, 5));
        assert_eq!(p.ab.get(0, 2), q(1, 5));
        let mp = MomentSet::from_pmf(Model::Pda, &p.ab);
        assert_eq!((mp.mean_a, mp.mean_b), (q(4, 5), q(6, 5)));
        let my = MomentSet::from_pmf(Model::Yhk, &y.ab);
        assert_eq!((my.mean_a, my.mean_b), (q(2, 3), q(4, 3)));
    }

    #[test]
    fn enumeration_matches_closed_forms() {
        for n in 7..=10 {
            for model in [Model::Yhk, Model::Pda] {
                let e = enumerate_exact(model, &t2(), n, 12).unwrap();
                assert!(e.ab.total().is_one());
                let got = MomentSet::from_pmf(model, &e.ab);
                let want = closed_form_moments(model, n).unwrap();
                assert_eq!(got, want, "{model:?} n={n}");
            }
        }
    }

    #[test]
    fn known_pda_enumeration_values() {
        let e = enumerate_exact(Model::Pda, &t2(), 10, 12).unwrap();
        let m = MomentSet::from_pmf(Model::Pda, &e.ab);
        assert_eq!(m.mean_a, q(24, 17));
        assert_eq!(m.mean_b, q(45, 17));
        assert_eq!(m.var_a, q(18816, 41327));
        assert_eq!(m.var_b, q(168, 289));
        assert_eq!(m.cov_ab, q(-168, 3757));
    }

    #[test]
    fn support_and_caps() {
        let e = enumerate_exact(Model::Pda, &t2(), 9, 12).unwrap();
        for (&(a, b), p) in &e.ab.probs {
            assert!(b >= 1 && 3 * a <= 9 && 2 * b <= 9);
            assert!(*p > BigRational::zero());
        }
        let total: BigRational = e.edge_types.values().fold(BigRational::zero(), |a, b| a + b);
        assert!(total.is_one());
        let two = enumerate_exact(Model::Yhk, &t2(), 2, 12).unwrap();
        assert_eq!(two.ab.get(0, 1), q(1, 1));
        assert!(matches!(
            enumerate_exact(Model::Yhk, &t2(), 13, 12),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn initial_split() {
        let s = unrooted_initial_split().unwrap();
        assert_eq!(s.p_first, q(4, 5));
        assert_eq!(s.p_second, q(1, 5));
        assert!((s.p_first.clone() + s.p_second.clone()).is_one());
        // Unrooted YHK from the 3-star gives the same split.
        let shapes = enumerate_shapes(Model::Yhk, &PhyloTree::star3(), 6, 12).unwrap();
        let first: BigRational = shapes
            .iter()
            .filter(|(t, _)| t.classify_pendant_edges().unwrap() == s.alpha_first)
            .fold(BigRational::zero(), |a, (_, p)| a + p);
        assert_eq!(first, q(4, 5));
    }

    #[test]
    fn pmf_csv() {
        let e = enumerate_exact(Model::Yhk, &t2(), 4, 12).unwrap();
        let mut out = Vec::new();
        e.ab.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b,p_num,p_den\n0,2,1,3\n1,1,2,3\n");
    }
}
