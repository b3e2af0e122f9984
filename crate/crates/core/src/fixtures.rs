//! Game instances shared by unit tests, integration tests and benches:
//! the scalar worked instance, the recharge-rate system, and random
//! generators of games that satisfy every assumption.

use rand::Rng;

use crate::game::{CostSchedule, GameSpec, Player};
use crate::linalg::{sym_eig, Mat, Tolerances};
use crate::potential::{check_assumptions, AssumptionMode};

pub const RECHARGE_A: f64 = 1.6;
pub const RECHARGE_B1: f64 = 0.85;
pub const RECHARGE_B2: f64 = 0.89;

/// n = m = 1, T = 2, A = 1, B¹ = B² = 1, R¹ = diag(1, 0), R² = diag(0, 1),
/// x̄₁ = 1 and terminal weight Q₂ = `q2`.
pub fn scalar_instance(q2: f64) -> GameSpec {
    let one = Mat::identity(1);
    let costs = CostSchedule::new(
        vec![Mat::diag(&[q2])],
        vec![Mat::diag(&[1.0, 0.0])],
        vec![Mat::diag(&[0.0, 1.0])],
    )
    .expect("consistent lengths");
    GameSpec::new(one.clone(), one.clone(), one, vec![1.0], costs).expect("valid scalar game")
}

/// State-weight matrix [[l, −d], [−d, 0]].
pub fn recharge_q(l: f64, d: f64) -> Mat {
    Mat::from_rows(&[vec![l, -d], vec![-d, 0.0]]).expect("2x2")
}

/// The recharge-rate system A = [[a, 0], [0, 0.9]], 𝐁 = [[−b₁, −b₂], [0, 0]]
/// with stage weights from (βₜ, lₜ, dₜ): r_i = b_i²/βₜ and
/// Q_{t+1} = [[lₜ, −dₜ], [−dₜ, 0]]. Slices have one entry per control stage.
pub fn recharge_game(a: f64, b1: f64, b2: f64, beta: &[f64], l: &[f64], d: &[f64], x1: [f64; 2]) -> GameSpec {
    assert!(!beta.is_empty() && beta.len() == l.len() && beta.len() == d.len());
    let q = l.iter().zip(d).map(|(&l, &d)| recharge_q(l, d)).collect();
    let r1 = beta.iter().map(|&bt| Mat::diag(&[b1 * b1 / bt, 0.0])).collect();
    let r2 = beta.iter().map(|&bt| Mat::diag(&[0.0, b2 * b2 / bt])).collect();
    let costs = CostSchedule::new(q, r1, r2).expect("consistent lengths");
    GameSpec::new(
        Mat::diag(&[a, 0.9]),
        Mat::from_rows(&[vec![-b1], vec![0.0]]).expect("2x1"),
        Mat::from_rows(&[vec![-b2], vec![0.0]]).expect("2x1"),
        x1.to_vec(),
        costs,
    )
    .expect("valid recharge game")
}

/// `recharge_game` with a = 1.6, b₁ = 0.85, b₂ = 0.89.
pub fn default_recharge_game(beta: &[f64], l: &[f64], d: &[f64], x1: [f64; 2]) -> GameSpec {
    recharge_game(RECHARGE_A, RECHARGE_B1, RECHARGE_B2, beta, l, d, x1)
}

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Mat::from_row_slice(rows, cols, &data).expect("sized")
}

/// GᵀG/n + floor·I with G uniform in [−1, 1].
pub fn random_pd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Mat {
    let g = random_mat(rng, n, n, 1.0);
    let gram = g.transpose().matmul(&g).expect("square").scale(1.0 / n as f64);
    gram.try_add(&Mat::identity(n).scale(floor)).expect("square").symmetrize()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_invertible<R: Rng>(rng: &mut R, n: usize) -> Mat {
    loop {
        let a = random_mat(rng, n, n, 1.2);
        let gram = a.transpose().matmul(&a).expect("square");
        if sym_eig(&gram).expect("symmetric")[0] > 0.04 {
            return a;
        }
    }
}

/// Identical control weights for both players (R¹ = R² PD), so the
/// value matrices of the two players coincide.
pub fn random_team_game<R: Rng>(rng: &mut R, n: usize, m: usize, horizon: usize) -> GameSpec {
    let a = random_invertible(rng, n);
    let b1 = random_mat(rng, n, m, 1.0);
    let b2 = random_mat(rng, n, m, 1.0);
    let q = (2..=horizon).map(|_| random_pd(rng, n, 0.5)).collect();
    let r: Vec<Mat> = (1..horizon).map(|_| random_pd(rng, 2 * m, 0.5)).collect();
    let costs = CostSchedule::new(q, r.clone(), r).expect("consistent lengths");
    GameSpec::new(a, b1, b2, random_vec(rng, n, 2.0), costs).expect("valid team game")
}

/// Scalar controls acting on the first state only, 𝐁 = [[−b₁, −b₂]; 0],
/// with single-entry control weights satisfying b₁²/r₁,ₜ = b₂²/r₂,ₜ.
pub fn random_ratio_game<R: Rng>(rng: &mut R, n: usize, horizon: usize) -> GameSpec {
    let a = random_invertible(rng, n);
    let mut b1 = Mat::zeros(n, 1);
    let mut b2 = Mat::zeros(n, 1);
    b1[(0, 0)] = -rng.random_range(0.5..1.5);
    b2[(0, 0)] = -rng.random_range(0.5..1.5);
    let q = (2..=horizon).map(|_| random_pd(rng, n, 2.0)).collect();
    let beta: Vec<f64> = (1..horizon).map(|_| rng.random_range(1.0..10.0)).collect();
    let r1 = beta.iter().map(|&bt| Mat::diag(&[b1[(0, 0)].powi(2) / bt, 0.0])).collect();
    let r2 = beta.iter().map(|&bt| Mat::diag(&[0.0, b2[(0, 0)].powi(2) / bt])).collect();
    let costs = CostSchedule::new(q, r1, r2).expect("consistent lengths");
    GameSpec::new(a, b1, b2, random_vec(rng, n, 2.0), costs).expect("valid ratio game")
}

/// Random game with n ≤ `max_n`, m ≤ `max_m`, 2 ≤ T ≤ `max_t` that passes
/// every assumption check in strict mode.
pub fn random_passing_game<R: Rng>(rng: &mut R, max_n: usize, max_m: usize, max_t: usize) -> GameSpec {
    let tol = Tolerances::default();
    for _ in 0..10_000 {
        let n = rng.random_range(1..=max_n);
        let horizon = rng.random_range(2..=max_t);
        let spec = if rng.random_bool(0.5) {
            random_ratio_game(rng, n, horizon)
        } else {
            let m = rng.random_range(1..=max_m);
            random_team_game(rng, n, m, horizon)
        };
        if check_assumptions(&spec, AssumptionMode::Strict, &tol).is_ok() {
            return spec;
        }
    }
    panic!("no assumption-passing game found");
}

/// The same game with every stage's costs replaced by the first stage's.
pub fn time_invariant(spec: &GameSpec) -> GameSpec {
    let c = spec.costs();
    let stages = c.stages();
    let costs = CostSchedule::new(
        vec![c.q(2).clone(); stages],
        vec![c.r(Player::One, 1).clone(); stages],
        vec![c.r(Player::Two, 1).clone(); stages],
    )
    .expect("consistent lengths");
    spec.with_costs(costs).expect("same shapes")
}

/// Per-stage random joint gains 2m×n.
pub fn random_gains<R: Rng>(rng: &mut R, spec: &GameSpec, scale: f64) -> Vec<Mat> {
    (1..spec.horizon())
        .map(|_| random_mat(rng, 2 * spec.m(), spec.n(), scale))
        .collect()
}
