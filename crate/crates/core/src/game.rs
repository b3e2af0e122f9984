//! Two-player LQ dynamic feedback games: dynamics, player costs, and the
//! coupled Riccati recursion that yields the feedback Nash equilibrium.
//!
//! Stage conventions (1-based, as in the math):
//! - states x₁..x_T, joint controls u₁..u_{T−1};
//! - player i pays Σₜ x_{t+1}ᵀQ_{t+1}x_{t+1} + uₜᵀRₜⁱuₜ for t = 1..T−1;
//! - `Q` is stored for s = 2..T and `R¹`, `R²` for t = 1..T−1.
//!
//! Joint gains are 2m×n with player 1 in rows 0..m and player 2 in rows
//! m..2m; they carry their own minus sign so the closed loop is A + 𝐁Kₜ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, relative_residual, sym_eig, vec_add, Mat, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    /// Zero-based block index.
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

/// Time-indexed cost matrices of both players.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSchedule {
    q: Vec<Mat>,
    r1: Vec<Mat>,
    r2: Vec<Mat>,
}

impl CostSchedule {
    /// `q` holds Q₂..Q_T; `r1`, `r2` hold R₁ⁱ..R_{T−1}ⁱ. All three lists must
    /// have the same non-zero length.
    pub fn new(q: Vec<Mat>, r1: Vec<Mat>, r2: Vec<Mat>) -> Result<Self> {
        if q.is_empty() || q.len() != r1.len() || q.len() != r2.len() {
            return Err(Error::DimensionMismatch(format!(
                "cost lists have lengths |Q|={}, |R1|={}, |R2|={}",
                q.len(),
                r1.len(),
                r2.len()
            )));
        }
        Ok(Self { q, r1, r2 })
    }

    /// Number of decision stages, T − 1.
    pub fn stages(&self) -> usize {
        self.q.len()
    }

    pub fn horizon(&self) -> usize {
        self.q.len() + 1
    }

    /// Q_s for s in 2..=T.
    pub fn q(&self, s: usize) -> &Mat {
        assert!(s >= 2 && s <= self.horizon(), "Q index {s} out of 2..={}", self.horizon());
        &self.q[s - 2]
    }

    /// Rₜⁱ for t in 1..=T−1.
    pub fn r(&self, player: Player, t: usize) -> &Mat {
        assert!(t >= 1 && t <= self.stages(), "R index {t} out of 1..={}", self.stages());
        match player {
            Player::One => &self.r1[t - 1],
            Player::Two => &self.r2[t - 1],
        }
    }

    pub fn q_list(&self) -> &[Mat] {
        &self.q
    }

    pub fn r_list(&self, player: Player) -> &[Mat] {
        match player {
            Player::One => &self.r1,
            Player::Two => &self.r2,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct GameSpecJson {
    n: usize,
    m: usize,
    T: usize,
    A: Mat,
    B1: Mat,
    B2: Mat,
    x1: Vec<f64>,
    Q: Vec<Mat>,
    R1: Vec<Mat>,
    R2: Vec<Mat>,
}

/// A fully specified game: system, horizon, initial state and every cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameSpecJson", into = "GameSpecJson")]
pub struct GameSpec {
    n: usize,
    m: usize,
    a: Mat,
    b1: Mat,
    b2: Mat,
    b_joint: Mat,
    x1: Vec<f64>,
    costs: CostSchedule,
}

impl TryFrom<GameSpecJson> for GameSpec {
    type Error = Error;

    fn try_from(j: GameSpecJson) -> Result<Self> {
        let spec = GameSpec::new(j.A, j.B1, j.B2, j.x1, CostSchedule::new(j.Q, j.R1, j.R2)?)?;
        if spec.n != j.n || spec.m != j.m || spec.horizon() != j.T {
            return Err(Error::DimensionMismatch(format!(
                "declared n={}, m={}, T={} but matrices give n={}, m={}, T={}",
                j.n,
                j.m,
                j.T,
                spec.n,
                spec.m,
                spec.horizon()
            )));
        }
        Ok(spec)
    }
}

impl From<GameSpec> for GameSpecJson {
    fn from(s: GameSpec) -> Self {
        let t = s.horizon();
        GameSpecJson {
            n: s.n,
            m: s.m,
            T: t,
            A: s.a,
            B1: s.b1,
            B2: s.b2,
            x1: s.x1,
            Q: s.costs.q,
            R1: s.costs.r1,
            R2: s.costs.r2,
        }
    }
}

impl GameSpec {
    /// Validates dimensions, finiteness and symmetry of every cost matrix.
    pub fn new(a: Mat, b1: Mat, b2: Mat, x1: Vec<f64>, costs: CostSchedule) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || n == 0 {
            return Err(Error::DimensionMismatch(format!("A is {}x{}", a.rows(), a.cols())));
        }
        let m = b1.cols();
        if b1.rows() != n || b2.rows() != n || b2.cols() != m || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B1 is {}x{}, B2 is {}x{}, expected {n}xm",
                b1.rows(),
                b1.cols(),
                b2.rows(),
                b2.cols()
            )));
        }
        if x1.len() != n || x1.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "x1 must be {n} finite entries, got {}",
                x1.len()
            )));
        }
        let sym_tol = Tolerances::default().symmetry;
        let check = |name: &str, idx: usize, mat: &Mat, dim: usize| -> Result<()> {
            if mat.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "{name}[{idx}] is {}x{}, expected {dim}x{dim}",
                    mat.rows(),
                    mat.cols()
                )));
            }
            if mat.asymmetry() > sym_tol * mat.max_abs().max(1.0) {
                return Err(Error::DimensionMismatch(format!("{name}[{idx}] is not symmetric")));
            }
            Ok(())
        };
        for (k, q) in costs.q.iter().enumerate() {
            check("Q", k, q, n)?;
        }
        for (k, r) in costs.r1.iter().enumerate() {
            check("R1", k, r, 2 * m)?;
        }
        for (k, r) in costs.r2.iter().enumerate() {
            check("R2", k, r, 2 * m)?;
        }
        let b_joint = Mat::hstack(&b1, &b2)?;
        Ok(Self {
            n,
            m,
            a,
            b1,
            b2,
            b_joint,
            x1,
            costs,
        })
    }

    /// Same system and initial state with a different cost schedule.
    pub fn with_costs(&self, costs: CostSchedule) -> Result<Self> {
        Self::new(self.a.clone(), self.b1.clone(), self.b2.clone(), self.x1.clone(), costs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.costs.horizon()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self, player: Player) -> &Mat {
        match player {
            Player::One => &self.b1,
            Player::Two => &self.b2,
        }
    }

    /// 𝐁 = [B¹ B²], n×2m.
    pub fn b_joint(&self) -> &Mat {
        &self.b_joint
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn costs(&self) -> &CostSchedule {
        &self.costs
    }

    /// x' = A x + 𝐁 u.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec_add(&self.a.matvec(x)?, &self.b_joint.matvec(u)?))
    }

    /// Stage-t cost of player i: x_{t+1}ᵀQ_{t+1}x_{t+1} + uᵀRₜⁱu.
    pub fn stage_cost(&self, player: Player, t: usize, x_next: &[f64], u: &[f64]) -> Result<f64> {
        Ok(self.costs.q(t + 1).quad_form(x_next)? + self.costs.r(player, t).quad_form(u)?)
    }
}

/// Feedback Nash equilibrium of a game: gains, value matrices, trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    /// Kₜ for t = 1..T−1.
    #[serde(rename = "K")]
    pub gains: Vec<Mat>,
    /// Pₛ¹ for s = 2..T.
    #[serde(rename = "P1")]
    pub p1: Vec<Mat>,
    /// Pₛ² for s = 2..T.
    #[serde(rename = "P2")]
    pub p2: Vec<Mat>,
    /// Θₜ for t = 1..T−1.
    pub theta: Vec<Mat>,
    pub theta_min_eig: Vec<f64>,
    /// x*₁..x*_T.
    #[serde(rename = "x_star")]
    pub states: Vec<Vec<f64>>,
    /// u*₁..u*_{T−1}.
    #[serde(rename = "u_star")]
    pub controls: Vec<Vec<f64>>,
}

impl NashSolution {
    pub fn gain(&self, t: usize) -> &Mat {
        &self.gains[t - 1]
    }

    /// Pₛⁱ for s in 2..=T.
    pub fn p(&self, player: Player, s: usize) -> &Mat {
        match player {
            Player::One => &self.p1[s - 2],
            Player::Two => &self.p2[s - 2],
        }
    }

    pub fn theta(&self, t: usize) -> &Mat {
        &self.theta[t - 1]
    }
}

/// Rolls the system forward from x̄₁ under the given joint controls.
pub fn simulate(spec: &GameSpec, controls: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if controls.len() != spec.horizon() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} controls for horizon T={}",
            controls.len(),
            spec.horizon()
        )));
    }
    let mut states = Vec::with_capacity(spec.horizon());
    states.push(spec.x1.clone());
    for u in controls {
        if u.len() != 2 * spec.m {
            return Err(Error::DimensionMismatch(format!(
                "joint control of length {}, expected {}",
                u.len(),
                2 * spec.m
            )));
        }
        let next = spec.step(states.last().expect("non-empty"), u)?;
        states.push(next);
    }
    Ok(states)
}

/// Player cost J_i over a full trajectory.
pub fn evaluate_cost(
    spec: &GameSpec,
    player: Player,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
) -> Result<f64> {
    let t_len = spec.horizon();
    if states.len() != t_len || controls.len() != t_len - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} states and {} controls for T={t_len}",
            states.len(),
            controls.len()
        )));
    }
    let mut total = 0.0;
    for t in 1..t_len {
        total += spec.stage_cost(player, t, &states[t], &controls[t - 1])?;
    }
    Ok(total)
}

/// Trajectory produced by time-varying linear feedback uₜ = Kₜxₜ from x̄₁.
pub fn rollout_feedback(spec: &GameSpec, gains: &[Mat]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_gains(spec, gains)?;
    let mut states = vec![spec.x1.clone()];
    let mut controls = Vec::with_capacity(gains.len());
    for k in gains {
        let x = states.last().expect("non-empty");
        let u = k.matvec(x)?;
        states.push(spec.step(x, &u)?);
        controls.push(u);
    }
    Ok((states, controls))
}

fn check_gains(spec: &GameSpec, gains: &[Mat]) -> Result<()> {
    if gains.len() != spec.horizon() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for T={}",
            gains.len(),
            spec.horizon()
        )));
    }
    if let Some(k) = gains.iter().find(|k| k.shape() != (2 * spec.m, spec.n)) {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, expected {}x{}",
            k.rows(),
            k.cols(),
            2 * spec.m,
            spec.n
        )));
    }
    Ok(())
}

/// Backward coupled Riccati recursion and forward roll-out.
///
/// For t = T−1..1, with Pᵢ_T = Q_T:
///   [Θₜ]ᵢⱼ = [Rₜⁱ]ᵢⱼ + BⁱᵀPⁱ_{t+1}Bʲ,
///   Θₜ Kₜ = −[B¹ᵀP¹_{t+1}; B²ᵀP²_{t+1}] A,
///   Pₜⁱ = Qₜ + KₜᵀRₜⁱKₜ + (A+𝐁Kₜ)ᵀPⁱ_{t+1}(A+𝐁Kₜ)   (t ≥ 2).
///
/// Θₜ must pass a Cholesky test on its symmetric part; otherwise the
/// equilibrium is not certified unique and `ThetaNotPd` is returned.
pub fn solve_feedback_nash(spec: &GameSpec, tol: &Tolerances) -> Result<NashSolution> {
    let t_len = spec.horizon();
    let (n, m) = (spec.n, spec.m);
    let costs = &spec.costs;
    let bj = &spec.b_joint;
    let a = &spec.a;

    // built backwards: index 0 holds P_T
    let mut p_rev: [Vec<Mat>; 2] = [vec![costs.q(t_len).clone()], vec![costs.q(t_len).clone()]];
    let mut gains_rev = Vec::with_capacity(t_len - 1);
    let mut theta_rev = Vec::with_capacity(t_len - 1);
    let mut min_eig_rev = Vec::with_capacity(t_len - 1);

    for t in (1..t_len).rev() {
        let mut theta = Mat::zeros(2 * m, 2 * m);
        let mut rhs = Mat::zeros(2 * m, n);
        for player in Player::BOTH {
            let i = player.index();
            let p_next = p_rev[i].last().expect("P_{t+1} present");
            let btp = spec.b(player).transpose().matmul(p_next)?;
            let row = costs.r(player, t).block(i * m, 0, m, 2 * m).try_add(&btp.matmul(bj)?)?;
            theta.set_block(i * m, 0, &row);
            rhs.set_block(i * m, 0, &btp.matmul(a)?);
        }
        let pd = cholesky_pd(&theta, tol.pd_pivot)?;
        if !pd.is_pd {
            return Err(Error::ThetaNotPd {
                stage: t,
                min_pivot: pd.min_pivot,
            });
        }
        let k = -&theta.solve(&rhs)?;
        if t >= 2 {
            let closed = a.try_add(&bj.matmul(&k)?)?;
            for player in Player::BOTH {
                let i = player.index();
                let p_next = p_rev[i].last().expect("P_{t+1} present");
                let p = costs
                    .q(t)
                    .try_add(&costs.r(player, t).congruence(&k)?)?
                    .try_add(&p_next.congruence(&closed)?)?
                    .symmetrize();
                if !p.is_finite() {
                    return Err(crate::linalg::LinalgError::NonFinite.into());
                }
                p_rev[i].push(p);
            }
        }
        min_eig_rev.push(sym_eig(&theta)?[0]);
        theta_rev.push(theta);
        gains_rev.push(k);
    }

    let reversed = |mut v: Vec<Mat>| {
        v.reverse();
        v
    };
    let gains = reversed(gains_rev);
    let [p1, p2] = p_rev;
    let (states, controls) = rollout_feedback(spec, &gains)?;
    let mut theta_min_eig = min_eig_rev;
    theta_min_eig.reverse();
    Ok(NashSolution {
        gains,
        p1: reversed(p1),
        p2: reversed(p2),
        theta: reversed(theta_rev),
        theta_min_eig,
        states,
        controls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationCosts {
    pub cost_at_nash: f64,
    pub cost_deviated: f64,
}

/// Unilateral stage-wise deviation test of the feedback Nash property.
///
/// Player i adds `deviation` to its equilibrium control at `stage`; both
/// players otherwise follow the equilibrium feedback gains applied to the
/// realised state. Returns player i's cost with and without the deviation.
pub fn verify_nash_by_deviation(
    spec: &GameSpec,
    nash: &NashSolution,
    stage: usize,
    player: Player,
    deviation: &[f64],
) -> Result<DeviationCosts> {
    let stages = spec.horizon() - 1;
    if stage == 0 || stage > stages {
        return Err(Error::IndexOutOfRange(format!("stage {stage} not in 1..={stages}")));
    }
    if deviation.len() != spec.m {
        return Err(Error::DimensionMismatch(format!(
            "deviation of length {}, expected {}",
            deviation.len(),
            spec.m
        )));
    }
    let run = |dev: &[f64]| -> Result<f64> {
        let mut x = spec.x1.clone();
        let mut cost = 0.0;
        for (idx, k) in nash.gains.iter().enumerate() {
            let t = idx + 1;
            let mut u = k.matvec(&x)?;
            if t == stage {
                let off = player.index() * spec.m;
                for (slot, d) in u[off..off + spec.m].iter_mut().zip(dev) {
                    *slot += d;
                }
            }
            let next = spec.step(&x, &u)?;
            cost += spec.stage_cost(player, t, &next, &u)?;
            x = next;
        }
        Ok(cost)
    };
    Ok(DeviationCosts {
        cost_at_nash: run(&vec![0.0; spec.m])?,
        cost_deviated: run(deviation)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostDifference {
    pub lhs: f64,
    pub rhs: f64,
}

/// Player-i cost of following `gains` from stage `from` (1-based) at `x`
/// until the horizon; zero when `from` is T.
fn cost_to_go(spec: &GameSpec, gains: &[Mat], player: Player, from: usize, x: &[f64]) -> Result<f64> {
    let mut x = x.to_vec();
    let mut cost = 0.0;
    for t in from..spec.horizon() {
        let u = gains[t - 1].matvec(&x)?;
        let next = spec.step(&x, &u)?;
        cost += spec.stage_cost(player, t, &next, &u)?;
        x = next;
    }
    Ok(cost)
}

/// Both sides of the cost-difference identity
///   J_i(a) − J_i(b) = Σₜ Q^b_t(xₜ, uₜ) − V^b_t(xₜ),
/// where (xₜ, uₜ) is the trajectory under `policies_a`, V^b_t is the
/// cost-to-go of continuing with `policies_b` from stage t, and Q^b_t pays
/// the stage-t cost of uₜ before continuing with `policies_b`. Every term
/// is evaluated by explicit roll-out.
pub fn cost_difference_check(
    spec: &GameSpec,
    policies_a: &[Mat],
    policies_b: &[Mat],
    player: Player,
) -> Result<CostDifference> {
    check_gains(spec, policies_a)?;
    check_gains(spec, policies_b)?;
    let (xa, ua) = rollout_feedback(spec, policies_a)?;
    let (xb, ub) = rollout_feedback(spec, policies_b)?;
    let lhs = evaluate_cost(spec, player, &xa, &ua)? - evaluate_cost(spec, player, &xb, &ub)?;

    let mut rhs = 0.0;
    for t in 1..spec.horizon() {
        let (x, u) = (&xa[t - 1], &ua[t - 1]);
        let next = spec.step(x, u)?;
        let q_value =
            spec.stage_cost(player, t, &next, u)? + cost_to_go(spec, policies_b, player, t + 1, &next)?;
        let v_value = cost_to_go(spec, policies_b, player, t, x)?;
        rhs += q_value - v_value;
    }
    Ok(CostDifference { lhs, rhs })
}

/// Largest relative mismatch between two matrix lists of equal shape.
pub(crate) fn max_relative_residual(a: &[Mat], b: &[Mat]) -> Result<f64> {
    a.iter()
        .zip(b)
        .try_fold(0.0_f64, |acc, (x, y)| Ok(acc.max(relative_residual(x, y)?)))
}
