//! Yule trees, their Kesten–Stigum limits and branching measure, the mass
//! fragmentation they carry, and its dual built from Kingman's jump chain.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::kingman::{jump_chain_state, simulate_kingman, MassVector};
use crate::rng::{exponential, geometric};

pub use crate::excursion::{heavy_count, reduced_tree_counts};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YuleNode {
    pub parent: Option<usize>,
    pub birth: f64,
    /// Split time, if it happens before the resolved depth.
    pub split: Option<f64>,
    pub children: Option<(usize, usize)>,
    /// Descendants alive at the horizon.
    pub descendants: u64,
}

/// Binary Yule tree: every individual splits in two at rate 1.
///
/// The tree is explicit up to `resolved` (equal to the horizon for a full
/// tree). An individual alive at `resolved` gets a descendant count at the
/// horizon drawn from its exact law, Geometric(e^{-(T - resolved)}).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YuleTree {
    nodes: Vec<YuleNode>,
    horizon: f64,
    resolved: f64,
}

impl YuleTree {
    pub fn nodes(&self) -> &[YuleNode] {
        &self.nodes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn resolved(&self) -> f64 {
        self.resolved
    }

    pub fn root(&self) -> usize {
        0
    }

    fn node(&self, id: usize) -> Result<&YuleNode> {
        match self.nodes.get(id) {
            Some(n) => Ok(n),
            None => invalid(format!("node {id} not in tree")),
        }
    }

    fn alive_at_checked(&self, t: f64) -> Result<Vec<usize>> {
        if !(0.0..=self.resolved).contains(&t) {
            return invalid(format!("time {t} outside the resolved range [0, {}]", self.resolved));
        }
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.birth <= t && n.split.is_none_or(|s| s > t))
            .map(|(i, _)| i)
            .collect())
    }

    /// Individuals alive at time `t`.
    pub fn alive_at(&self, t: f64) -> Result<Vec<usize>> {
        self.alive_at_checked(t)
    }

    /// Population size `Y_t`.
    pub fn population(&self, t: f64) -> Result<u64> {
        if (t - self.horizon).abs() < 1e-12 {
            return Ok(self.nodes[0].descendants);
        }
        Ok(self.alive_at_checked(t)?.len() as u64)
    }
}

/// Full Yule tree up to horizon `T`.
pub fn simulate_yule<R: Rng + ?Sized>(horizon: f64, rng: &mut R) -> Result<YuleTree> {
    simulate_yule_resolved(horizon, horizon, rng)
}

/// Yule tree explicit up to `resolved ≤ T`, with exact descendant counts at
/// `T`.
pub fn simulate_yule_resolved<R: Rng + ?Sized>(horizon: f64, resolved: f64, rng: &mut R) -> Result<YuleTree> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid("horizon must be positive and finite");
    }
    if !(resolved > 0.0 && resolved <= horizon) {
        return invalid("resolved depth must lie in (0, T]");
    }
    let mut nodes = vec![YuleNode {
        parent: None,
        birth: 0.0,
        split: None,
        children: None,
        descendants: 0,
    }];
    // nodes are pushed in creation order, so children follow parents
    let mut i = 0;
    while i < nodes.len() {
        let end = nodes[i].birth + exponential(rng, 1.0);
        if end < resolved {
            let c = nodes.len();
            nodes[i].split = Some(end);
            nodes[i].children = Some((c, c + 1));
            for _ in 0..2 {
                nodes.push(YuleNode {
                    parent: Some(i),
                    birth: end,
                    split: None,
                    children: None,
                    descendants: 0,
                });
            }
        }
        i += 1;
    }
    let p = (-(horizon - resolved)).exp();
    for i in (0..nodes.len()).rev() {
        nodes[i].descendants = match nodes[i].children {
            Some((a, b)) => nodes[a].descendants + nodes[b].descendants,
            None if resolved < horizon => geometric(rng, p),
            None => 1,
        };
    }
    Ok(YuleTree {
        nodes,
        horizon,
        resolved,
    })
}

/// Finite-horizon estimate `e^{-(T - birth)} · (descendants at T)` of the
/// martingale limit of the subtree rooted at `node`.
pub fn kesten_stigum_w(tree: &YuleTree, node: usize) -> Result<f64> {
    let n = tree.node(node)?;
    Ok((-(tree.horizon - n.birth)).exp() * n.descendants as f64)
}

/// Ball of boundary rays through a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryBall {
    pub node: usize,
    /// `e^{-t}` with `t` the node's birth time.
    pub radius: f64,
    /// `e^{-t} W(node)`.
    pub mass: f64,
}

pub fn branching_ball_mass(tree: &YuleTree, node: usize) -> Result<BoundaryBall> {
    let n = tree.node(node)?;
    let radius = (-n.birth).exp();
    Ok(BoundaryBall {
        node,
        radius,
        mass: radius * kesten_stigum_w(tree, node)?,
    })
}

/// Ball mass divided by the total mass `W(root)`.
pub fn normalized_ball_mass(tree: &YuleTree, node: usize) -> Result<f64> {
    let total = kesten_stigum_w(tree, tree.root())?;
    Ok(branching_ball_mass(tree, node)?.mass / total)
}

/// Masses `e^{-b} W(z)` of the individuals `z` alive at each time, `b` being
/// the birth time of `z`. They sum to `W(root)` at every time.
pub fn fragmentation_path(tree: &YuleTree, times: &[f64]) -> Result<Vec<MassVector>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("times must be increasing");
    }
    let total = kesten_stigum_w(tree, tree.root())?;
    times
        .iter()
        .map(|&t| {
            let masses = tree
                .alive_at_checked(t)?
                .into_iter()
                .map(|z| branching_ball_mass(tree, z).map(|b| b.mass))
                .collect::<Result<Vec<f64>>>()?;
            MassVector::new(masses, total)
        })
        .collect()
}

/// Largest fragment at each time.
pub fn largest_fragments(tree: &YuleTree, times: &[f64]) -> Result<Vec<f64>> {
    Ok(fragmentation_path(tree, times)?.iter().map(MassVector::largest).collect())
}

/// `w · X(N_{wt})` at each time, where `X(k)` is Kingman's jump chain with `k`
/// blocks (read from one `n0`-coalescent) and `N` a unit-rate Poisson process:
/// after `j` Poisson events the chain sits at `j + 1` blocks.
pub fn poissonized_reversed_chain<R: Rng + ?Sized>(
    w: f64,
    times: &[f64],
    n0: usize,
    rng: &mut R,
) -> Result<Vec<MassVector>> {
    if !(w > 0.0) {
        return invalid("w must be positive");
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|p| p[1] < p[0]) {
        return invalid("times must be nonnegative and increasing");
    }
    let traj = simulate_kingman(n0, None, rng)?;
    let t_max = times.last().copied().unwrap_or(0.0) * w;
    let mut arrivals = Vec::new();
    let mut clock = exponential(rng, 1.0);
    while clock <= t_max {
        arrivals.push(clock);
        clock += exponential(rng, 1.0);
    }
    times
        .iter()
        .map(|&t| {
            let events = arrivals.partition_point(|&a| a <= w * t);
            let blocks = events + 1;
            if blocks > n0 {
                return invalid(format!("{events} Poisson events exceed the {n0}-block jump chain"));
            }
            let state = jump_chain_state(&traj, blocks)?;
            MassVector::new(state.masses().iter().map(|m| m * w).collect(), w)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumParameters {
    /// `log E(L)` for the offspring count `L` of the unit-time tree.
    pub a: f64,
    /// `E(Y_1)`.
    pub m: f64,
    /// Exponential tail rate of `W`.
    pub r: f64,
    pub tau: f64,
}

pub fn spectrum_parameters() -> SpectrumParameters {
    SpectrumParameters {
        a: 1.0,
        m: std::f64::consts::E,
        r: 1.0,
        tau: 1.0,
    }
}

/// Dimension of the thick points at scale `θ`; `None` when the set is empty.
pub fn dim_thick(theta: f64) -> Result<Option<f64>> {
    if !(theta >= 0.0) {
        return invalid(format!("θ = {theta} must be nonnegative"));
    }
    let p = spectrum_parameters();
    Ok((theta <= 1.0).then_some(p.a - p.r * theta))
}

/// Dimension of the thin points at exponent `γ`; `None` when the set is empty.
pub fn dim_thin(gamma: f64) -> Result<Option<f64>> {
    if !(gamma > 1.0) {
        return invalid(format!("γ = {gamma} must exceed 1"));
    }
    let p = spectrum_parameters();
    Ok((gamma <= 2.0).then(|| p.a * (p.a * (1.0 + p.tau) / gamma - p.tau)))
}
