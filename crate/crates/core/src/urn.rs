//! Generalised Pólya urns with integer replacement matrices.
//!
//! Off-diagonal and diagonal entries may be negative; a draw that would
//! drive any count below zero is reported as a tenability violation rather
//! than clamped.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, QMatrix};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementMatrix {
    d: usize,
    entries: Vec<i64>,
}

impl ReplacementMatrix {
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::Dimension("empty replacement matrix".into()));
        }
        let mut entries = Vec::with_capacity(d * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Dimension(format!(
                    "replacement matrix must be square, row has {} entries for d = {d}",
                    r.len()
                )));
            }
            entries.extend_from_slice(r);
        }
        Ok(Self { d, entries })
    }

    /// Pendant-edge dynamics under YHK.
    pub fn yhk() -> Self {
        Self::from_rows(&[
            [0, 0, 0, 1],
            [2, -2, 1, 0],
            [-2, 4, -1, 0],
            [0, 2, 0, -1],
        ])
        .expect("square")
    }

    /// Full edge dynamics under PDA.
    pub fn pda() -> Self {
        Self::from_rows(&[
            [0, 0, 0, 1, 0, 1],
            [2, -2, 1, 0, -1, 2],
            [-2, 4, -1, 0, 2, -1],
            [0, 2, 0, -1, 1, 0],
            [2, -2, 1, 0, -1, 2],
            [0, 0, 0, 1, 0, 1],
        ])
        .expect("square")
    }

    /// The classical Pólya urn: each draw returns one extra ball.
    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1;
        }
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.d).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sums(&self) -> Vec<i64> {
        (0..self.d).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Common row sum `s` when every row sums to the same positive value.
    pub fn balance(&self) -> Option<i64> {
        let sums = self.row_sums();
        let s = sums[0];
        (s > 0 && sums.iter().all(|&x| x == s)).then_some(s)
    }

    pub fn to_qmatrix(&self) -> QMatrix {
        Matrix::from_i64_rows(&self.rows())
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix::from_i64_rows(&self.rows())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub counts: Vec<i64>,
}

impl UrnState {
    pub fn new(counts: Vec<i64>) -> Result<Self> {
        if let Some(c) = counts.iter().find(|&&c| c < 0) {
            return Err(Error::OutOfRange(format!("negative initial count {c}")));
        }
        Ok(Self { counts })
    }

    pub fn from_u64(counts: &[u64]) -> Self {
        Self {
            counts: counts.iter().map(|&c| c as i64).collect(),
        }
    }

    pub fn total(&self) -> i64 {
        self.counts.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }
}

/// Adds row `color` of `r` to `state`, failing if a count goes negative.
pub fn apply(state: &mut UrnState, r: &ReplacementMatrix, color: usize, step: usize) -> Result<()> {
    if state.dim() != r.dim() {
        return Err(Error::Dimension(format!(
            "state has {} colours, matrix {}",
            state.dim(),
            r.dim()
        )));
    }
    let row = r.row(color);
    if state.counts.iter().zip(row).any(|(c, d)| c + d < 0) {
        return Err(Error::Tenability {
            step,
            color: color + 1,
            state: state.counts.clone(),
            row: row.to_vec(),
        });
    }
    for (c, d) in state.counts.iter_mut().zip(row) {
        *c += d;
    }
    Ok(())
}

/// Draws a colour with probability `C_i / t`. The draw is exact: a uniform
/// integer in `[0, t)` located in the cumulative counts.
pub fn draw(state: &UrnState, rng: &mut Rng) -> Result<usize> {
    let t = state.total();
    if t <= 0 {
        return Err(Error::EmptyUrn);
    }
    let mut u = rng.random_range(0..t);
    for (i, &c) in state.counts.iter().enumerate() {
        if u < c {
            return Ok(i);
        }
        u -= c;
    }
    unreachable!("cumulative counts reach t")
}

/// One urn step; returns the 0-based colour drawn.
pub fn urn_step(state: &mut UrnState, r: &ReplacementMatrix, rng: &mut Rng) -> Result<usize> {
    let color = draw(state, rng)?;
    apply(state, r, color, 0)?;
    Ok(color)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<UrnState>,
    /// Colour drawn to reach `states[k]` (0-based); `None` for the start.
    pub drawn: Vec<Option<usize>>,
}

impl Trajectory {
    pub fn last(&self) -> &UrnState {
        self.states.last().expect("trajectory holds the start state")
    }

    /// CSV with columns `step, C1..Cd, t, drawn` (drawn is 1-based).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.states[0].dim();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        header.extend((1..=d).map(|i| format!("C{i}")));
        header.push("t".into());
        header.push("drawn".into());
        wtr.write_record(&header).map_err(csv_err)?;
        for (k, (s, c)) in self.states.iter().zip(&self.drawn).enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(s.counts.iter().map(|c| c.to_string()));
            rec.push(s.total().to_string());
            rec.push(c.map(|c| (c + 1).to_string()).unwrap_or_default());
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Runs `steps` draws, keeping every intermediate state.
pub fn run(
    start: &UrnState,
    r: &ReplacementMatrix,
    steps: usize,
    rng: &mut Rng,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(steps + 1);
    let mut drawn = Vec::with_capacity(steps + 1);
    states.push(start.clone());
    drawn.push(None);
    let mut cur = start.clone();
    for step in 1..=steps {
        let color = draw(&cur, rng)?;
        apply(&mut cur, r, color, step)?;
        states.push(cur.clone());
        drawn.push(Some(color));
    }
    Ok(Trajectory { states, drawn })
}

/// Runs `steps` draws and returns only the final state.
pub fn run_final(
    start: &UrnState,
    r: &ReplacementMatrix,
    steps: usize,
    rng: &mut Rng,
) -> Result<UrnState> {
    let mut cur = start.clone();
    for step in 1..=steps {
        let color = draw(&cur, rng)?;
        apply(&mut cur, r, color, step)?;
    }
    Ok(cur)
}

/// Replays a fixed sequence of 0-based colours.
pub fn run_forced(start: &UrnState, r: &ReplacementMatrix, colors: &[usize]) -> Result<Trajectory> {
    let mut states = vec![start.clone()];
    let mut drawn = vec![None];
    let mut cur = start.clone();
    for (k, &color) in colors.iter().enumerate() {
        if color >= cur.dim() || cur.counts[color] <= 0 {
            return Err(Error::OutOfRange(format!(
                "colour {} cannot be drawn at step {}",
                color + 1,
                k + 1
            )));
        }
        apply(&mut cur, r, color, k + 1)?;
        states.push(cur.clone());
        drawn.push(Some(color));
    }
    Ok(Trajectory { states, drawn })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tenability {
    /// No probe was run.
    Unchecked,
    /// Every probed trajectory stayed non-negative.
    WitnessedTenable,
    Violated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub tenable: Tenability,
    pub small: bool,
    pub balanced: bool,
    pub diagonalizable: bool,
    /// Real parts of the eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    /// True when (A2)-(A4) hold and tenability was not contradicted.
    pub fn passes(&self) -> bool {
        self.small && self.balanced && self.diagonalizable && self.tenable != Tenability::Violated
    }
}

#[derive(Clone, Debug)]
pub struct TenabilityProbe {
    pub start: UrnState,
    pub trajectories: u64,
    pub steps: usize,
    pub seed: u64,
}

/// Runs random trajectories from `probe.start`; any negative count is a
/// violation.
pub fn witness_tenability(r: &ReplacementMatrix, probe: &TenabilityProbe) -> (Tenability, Option<String>) {
    for rep in 0..probe.trajectories {
        let mut rng = rng::stream(probe.seed, rep);
        if let Err(e) = run_final(&probe.start, r, probe.steps, &mut rng) {
            return (Tenability::Violated, Some(format!("trajectory {rep}: {e}")));
        }
    }
    (Tenability::WitnessedTenable, None)
}

pub fn check_assumptions(r: &ReplacementMatrix) -> AssumptionReport {
    check_assumptions_with(r, None)
}

pub fn check_assumptions_with(r: &ReplacementMatrix, probe: Option<&TenabilityProbe>) -> AssumptionReport {
    let mut messages = Vec::new();
    let (tenable, msg) = match probe {
        Some(p) => witness_tenability(r, p),
        None => (Tenability::Unchecked, None),
    };
    messages.extend(msg);

    let balance = r.balance();
    let mut balanced = balance.is_some();
    if !balanced {
        messages.push(format!("row sums {:?} are not all equal and positive", r.row_sums()));
    }

    let spec = crate::spectral::diagonalize_numeric(&r.to_f64());
    let (eigenvalues, small, diagonalizable) = match &spec {
        Ok(sd) => {
            let lam = sd.eigenvalues.clone();
            let s = lam[0];
            let mut small = true;
            if let Some(b) = balance {
                if (s - b as f64).abs() > 1e-8 * (1.0 + s.abs()) {
                    small = false;
                    messages.push(format!("principal eigenvalue {s} differs from row sum {b}"));
                }
            }
            for &l in &lam[1..] {
                if 2.0 * l >= s - 1e-9 {
                    small = false;
                    messages.push(format!("eigenvalue {l} is not below half of {s}"));
                }
            }
            if balanced && sd.v.row(0).iter().any(|&x| x < -1e-9) {
                balanced = false;
                messages.push("principal left eigenvector is not non-negative".into());
            }
            (lam, small, true)
        }
        Err(Error::ComplexSpectrum(m)) => {
            messages.push(format!("complex eigenvalues: {m}"));
            (Vec::new(), false, false)
        }
        Err(e) => {
            messages.push(e.to_string());
            let real = crate::spectral::real_eigenvalues(&r.to_f64()).unwrap_or_default();
            let small = match real.split_first() {
                Some((&s, rest)) => rest.iter().all(|&l| 2.0 * l < s - 1e-9),
                None => false,
            };
            (real, small, false)
        }
    };
    AssumptionReport {
        tenable,
        small,
        balanced,
        diagonalizable,
        eigenvalues,
        messages,
    }
}

/// `b_{n,k}(j) = prod_{l=k}^{n-1} (1 + lambda_j / t_l)` with
/// `t_l = t0 + l s`; `j` is 1-based into `eigenvalues` and `s` is
/// `eigenvalues[0]`. Evaluated in log space with the sign kept apart.
pub fn b_coeff(n: u64, k: u64, j: usize, eigenvalues: &[f64], t0: f64) -> Result<f64> {
    if k > n {
        return Err(Error::InvalidRange(format!("k = {k} exceeds n = {n}")));
    }
    if j == 0 || j > eigenvalues.len() {
        return Err(Error::OutOfRange(format!("eigen-index {j}")));
    }
    let s = eigenvalues[0];
    let lambda = eigenvalues[j - 1];
    let mut log = 0.0;
    let mut negative = false;
    for l in k..n {
        let t = t0 + l as f64 * s;
        if t == 0.0 {
            return Err(Error::UndefinedProduct(l as usize));
        }
        let f = 1.0 + lambda / t;
        if f == 0.0 {
            return Ok(0.0);
        }
        negative ^= f < 0.0;
        log += f.abs().ln();
    }
    let mag = log.exp();
    Ok(if negative { -mag } else { mag })
}

/// `(1/n) sum_{k=1}^{n} b_{n,k}(i) b_{n,k}(j)`, by a backward recursion in
/// `k` so the whole sum costs O(n).
pub fn b_second_moment_sum(n: u64, i: usize, j: usize, eigenvalues: &[f64], t0: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidRange("n must be positive".into()));
    }
    for idx in [i, j] {
        if idx == 0 || idx > eigenvalues.len() {
            return Err(Error::OutOfRange(format!("eigen-index {idx}")));
        }
    }
    let s = eigenvalues[0];
    let (li, lj) = (eigenvalues[i - 1], eigenvalues[j - 1]);
    let (mut bi, mut bj) = (1.0f64, 1.0f64);
    let mut sum = 1.0;
    for k in (1..n).rev() {
        let t = t0 + k as f64 * s;
        if t == 0.0 {
            return Err(Error::UndefinedProduct(k as usize));
        }
        bi *= 1.0 + li / t;
        bj *= 1.0 + lj / t;
        sum += bi * bj;
    }
    Ok(sum / n as f64)
}

/// `F_m^n(l, lambda) = prod_{i=m}^{n-1} (1 + lambda / (l + i))`.
pub fn f_ratio(m: u64, n: u64, ell: f64, lambda: f64) -> Result<f64> {
    if m > n {
        return Err(Error::InvalidRange(format!("m = {m} exceeds n = {n}")));
    }
    let mut log = 0.0;
    let mut negative = false;
    for i in m..n {
        let den = ell + i as f64;
        if den == 0.0 {
            return Err(Error::UndefinedProduct(i as usize));
        }
        let f = 1.0 + lambda / den;
        if f == 0.0 {
            return Ok(0.0);
        }
        negative ^= f < 0.0;
        log += f.abs().ln();
    }
    let mag = log.exp();
    Ok(if negative { -mag } else { mag })
}

#[cfg(test)]
mod tests {
    use super::*;

    const YHK_EIG: [f64; 4] = [1.0, 0.0, -2.0, -3.0];
    const PDA_EIG: [f64; 6] = [2.0, 0.0, 0.0, 0.0, -2.0, -4.0];

    #[test]
    fn single_steps() {
        let r = ReplacementMatrix::yhk();
        let mut s = UrnState::new(vec![0, 2, 0, 0]).unwrap();
        let mut rng = rng::stream(0, 0);
        assert_eq!(urn_step(&mut s, &r, &mut rng).unwrap(), 1);
        assert_eq!(s.counts, vec![2, 0, 1, 0]);

        let mut p = UrnState::new(vec![0, 2, 0, 0, 1, 0]).unwrap();
        apply(&mut p, &ReplacementMatrix::pda(), 1, 1).unwrap();
        assert_eq!(p.counts, vec![2, 0, 1, 0, 0, 2]);

        let id = ReplacementMatrix::identity(3);
        let mut s = UrnState::new(vec![1, 2, 3]).unwrap();
        let before = s.clone();
        let c = urn_step(&mut s, &id, &mut rng).unwrap();
        assert_eq!(s.counts[c], before.counts[c] + 1);
        assert_eq!(s.total(), before.total() + 1);
    }

    #[test]
    fn forced_path_reaches_three_cherries() {
        let start = UrnState::new(vec![0, 2, 0, 0]).unwrap();
        let traj = run_forced(&start, &ReplacementMatrix::yhk(), &[1, 0, 2, 3]).unwrap();
        let got: Vec<_> = traj.states.iter().map(|s| s.counts.clone()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 2, 0, 0],
                vec![2, 0, 1, 0],
                vec![2, 0, 1, 1],
                vec![0, 4, 0, 1],
                vec![0, 6, 0, 0],
            ]
        );
    }

    #[test]
    fn violation_is_reported() {
        let mut s = UrnState::new(vec![1, 0, 0, 0]).unwrap();
        let err = apply(&mut s, &ReplacementMatrix::yhk(), 2, 7).unwrap_err();
        match err {
            Error::Tenability { step, color, state, row } => {
                assert_eq!((step, color), (7, 3));
                assert_eq!(state, vec![1, 0, 0, 0]);
                assert_eq!(row, vec![-2, 4, -1, 0]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            draw(&UrnState::new(vec![0, 0]).unwrap(), &mut rng::stream(0, 0)),
            Err(Error::EmptyUrn)
        ));
    }

    #[test]
    fn zero_steps_and_balanced_growth() {
        let start = UrnState::new(vec![0, 2, 0, 0, 1, 0]).unwrap();
        let r = ReplacementMatrix::pda();
        let mut rng = rng::stream(3, 0);
        assert_eq!(run(&start, &r, 0, &mut rng).unwrap().states, vec![start.clone()]);
        let traj = run(&start, &r, 500, &mut rng).unwrap();
        for (k, s) in traj.states.iter().enumerate() {
            assert_eq!(s.total(), 3 + 2 * k as i64);
        }
    }

    #[test]
    fn csv_dump() {
        let start = UrnState::new(vec![0, 2, 0, 0]).unwrap();
        let traj = run_forced(&start, &ReplacementMatrix::yhk(), &[1]).unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step,C1,C2,C3,C4,t,drawn\n0,0,2,0,0,2,\n1,2,0,1,0,3,2\n"
        );
    }

    #[test]
    fn assumption_reports() {
        let y = check_assumptions(&ReplacementMatrix::yhk());
        assert!(y.passes(), "{:?}", y.messages);
        for (a, b) in y.eigenvalues.iter().zip(YHK_EIG) {
            assert!((a - b).abs() < 1e-9);
        }
        let p = check_assumptions(&ReplacementMatrix::pda());
        assert!(p.passes(), "{:?}", p.messages);
        for (a, b) in p.eigenvalues.iter().zip(PDA_EIG) {
            assert!((a - b).abs() < 1e-6);
        }
        let unequal = check_assumptions(&ReplacementMatrix::from_rows(&[[3, 0], [0, 1]]).unwrap());
        assert!(!unequal.balanced);
        let ones = check_assumptions(&ReplacementMatrix::from_rows(&[[1, 1], [1, 1]]).unwrap());
        assert!(ones.balanced && ones.small);
        let rot = check_assumptions(&ReplacementMatrix::from_rows(&[[0, 1], [-1, 0]]).unwrap());
        assert!(!rot.small && !rot.passes());
    }

    #[test]
    fn tenability_probe() {
        let probe = TenabilityProbe {
            start: UrnState::new(vec![0, 2, 0, 0]).unwrap(),
            trajectories: 50,
            steps: 200,
            seed: 1,
        };
        let rep = check_assumptions_with(&ReplacementMatrix::yhk(), Some(&probe));
        assert_eq!(rep.tenable, Tenability::WitnessedTenable);
        let bad = ReplacementMatrix::from_rows(&[[-2, 3], [3, -2]]).unwrap();
        let probe = TenabilityProbe {
            start: UrnState::new(vec![1, 0]).unwrap(),
            trajectories: 5,
            steps: 10,
            seed: 1,
        };
        assert_eq!(witness_tenability(&bad, &probe).0, Tenability::Violated);
    }

    #[test]
    fn b_coefficients() {
        assert_eq!(b_coeff(10, 10, 3, &YHK_EIG, 2.0).unwrap(), 1.0);
        assert!((b_coeff(2, 1, 3, &YHK_EIG, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // j = 1 telescopes to t_n / t_0.
        let b = b_coeff(50, 0, 1, &YHK_EIG, 2.0).unwrap();
        assert!((b - 52.0 / 2.0).abs() < 1e-10);
        // Telescoping in k.
        for k in 0..20 {
            let lhs = b_coeff(20, k, 4, &PDA_EIG, 3.0).unwrap();
            let t = 3.0 + 2.0 * k as f64;
            let rhs = b_coeff(20, k + 1, 4, &PDA_EIG, 3.0).unwrap() * (1.0 + PDA_EIG[3] / t);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
        assert!(matches!(
            b_coeff(5, 0, 2, &[1.0, -1.0], 0.0),
            Err(Error::UndefinedProduct(0))
        ));
    }

    #[test]
    fn second_moment_sums() {
        assert!((b_second_moment_sum(1000, 2, 2, &YHK_EIG, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let y = b_second_moment_sum(100_000, 3, 3, &YHK_EIG, 2.0).unwrap();
        assert!((y - 0.2).abs() < 1e-2);
        let p = b_second_moment_sum(100_000, 5, 6, &PDA_EIG, 3.0).unwrap();
        assert!((p - 0.25).abs() < 1e-2);
        // The recursion agrees with the direct products.
        let direct: f64 = (1..=30)
            .map(|k| b_coeff(30, k, 3, &YHK_EIG, 2.0).unwrap() * b_coeff(30, k, 4, &YHK_EIG, 2.0).unwrap())
            .sum::<f64>()
            / 30.0;
        let rec = b_second_moment_sum(30, 3, 4, &YHK_EIG, 2.0).unwrap();
        assert!((direct - rec).abs() < 1e-12);
    }

    #[test]
    fn f_ratio_values() {
        assert_eq!(f_ratio(7, 7, 2.0, -2.0).unwrap(), 1.0);
        assert_eq!(f_ratio(3, 900, 2.0, 0.0).unwrap(), 1.0);
        let f = f_ratio(1_000, 1_000_000, 2.0, -2.0).unwrap();
        let scaled = (1_000.0f64 / 1_000_000.0).powf(-2.0) * f;
        assert!((scaled - 1.0).abs() < 1e-2, "{scaled}");
        assert!(f_ratio(0, 3, 0.0, 1.0).is_err());
    }
}
