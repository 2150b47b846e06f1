//! The discrete acceleration grid and exact search over it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::landscape::{
    feature_reuse_effect, gated_activation_effect, half_precision_effect, step_quality_delta, token_merging_effect,
    Effect, PipelineProfile, SimLandscape,
};
use crate::task::AccelConfig;

/// Slack on loss comparisons so exact-boundary points stay feasible.
pub const LOSS_EPS: f64 = 1e-12;

/// A concrete configuration: step count plus acceleration methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub steps: u32,
    pub accel: AccelConfig,
}

/// Index coordinates of a grid point. Index 0 on an axis means "off";
/// `gate` holds the gate step itself (0 = off).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub steps: usize,
    pub merge: usize,
    pub cache: usize,
    pub gate: u32,
    pub half: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Allowed step counts, ascending.
    pub steps: Vec<u32>,
    /// Step count of the baseline that speedup and loss are measured against.
    pub reference_steps: u32,
    pub merge_ratios: Vec<f64>,
    pub cache_intervals: Vec<u32>,
    pub gated_activation: bool,
    pub half_precision: bool,
}

impl SearchSpace {
    fn axes(steps: Vec<u32>, reference_steps: u32) -> Self {
        Self {
            steps,
            reference_steps,
            merge_ratios: (1..=7).map(|i| f64::from(i) / 10.0).collect(),
            cache_intervals: (2..=10).collect(),
            gated_activation: true,
            half_precision: true,
        }
    }

    /// Every axis including steps {10, 20, .., n_base}.
    pub fn full(profile: &PipelineProfile) -> Self {
        let mut steps: Vec<u32> = (1..=profile.n_base / 10).map(|i| i * 10).collect();
        if steps.last() != Some(&profile.n_base) {
            steps.push(profile.n_base);
        }
        Self::axes(steps, profile.n_base)
    }

    /// Step count pinned to `n`, as required when steps are a checked attribute.
    pub fn fixed_steps(n: u32) -> Self {
        Self::axes(vec![n], n)
    }

    fn gate_max(&self, steps_idx: usize) -> u32 {
        if self.gated_activation {
            self.steps[steps_idx].saturating_sub(1)
        } else {
            0
        }
    }

    pub fn point(&self, c: &Coord) -> GridPoint {
        GridPoint {
            steps: self.steps[c.steps],
            accel: AccelConfig {
                merge_ratio: c.merge.checked_sub(1).map(|i| self.merge_ratios[i]),
                cache_interval: c.cache.checked_sub(1).map(|i| self.cache_intervals[i]),
                gate_step: (c.gate > 0).then_some(c.gate),
                half_precision: c.half,
            },
        }
    }

    /// The coordinate of the reference baseline with nothing applied.
    pub fn identity(&self) -> Coord {
        let steps = self.steps.iter().position(|&s| s == self.reference_steps).unwrap_or(self.steps.len() - 1);
        Coord { steps, merge: 0, cache: 0, gate: 0, half: false }
    }

    pub fn coords(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        let halves: &[bool] = if self.half_precision { &[false, true] } else { &[false] };
        for s in 0..self.steps.len() {
            for merge in 0..=self.merge_ratios.len() {
                for cache in 0..=self.cache_intervals.len() {
                    for gate in 0..=self.gate_max(s) {
                        for &half in halves {
                            out.push(Coord { steps: s, merge, cache, gate, half });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        let halves = if self.half_precision { 2 } else { 1 };
        (0..self.steps.len())
            .map(|s| (self.merge_ratios.len() + 1) * (self.cache_intervals.len() + 1) * (self.gate_max(s) as usize + 1) * halves)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn random_coord<R: Rng>(&self, rng: &mut R) -> Coord {
        let steps = rng.random_range(0..self.steps.len());
        Coord {
            steps,
            merge: rng.random_range(0..=self.merge_ratios.len()),
            cache: rng.random_range(0..=self.cache_intervals.len()),
            gate: rng.random_range(0..=self.gate_max(steps)),
            half: self.half_precision && rng.random_bool(0.5),
        }
    }

    /// Points one step away along a single axis.
    pub fn neighbors(&self, c: &Coord) -> Vec<Coord> {
        let mut out = Vec::new();
        if c.steps > 0 {
            let s = c.steps - 1;
            out.push(Coord { steps: s, gate: c.gate.min(self.gate_max(s)), ..*c });
        }
        if c.steps + 1 < self.steps.len() {
            out.push(Coord { steps: c.steps + 1, ..*c });
        }
        if c.merge > 0 {
            out.push(Coord { merge: c.merge - 1, ..*c });
        }
        if c.merge < self.merge_ratios.len() {
            out.push(Coord { merge: c.merge + 1, ..*c });
        }
        if c.cache > 0 {
            out.push(Coord { cache: c.cache - 1, ..*c });
        }
        if c.cache < self.cache_intervals.len() {
            out.push(Coord { cache: c.cache + 1, ..*c });
        }
        if c.gate > 0 {
            out.push(Coord { gate: c.gate - 1, ..*c });
        }
        if c.gate < self.gate_max(c.steps) {
            out.push(Coord { gate: c.gate + 1, ..*c });
        }
        if self.half_precision {
            out.push(Coord { half: !c.half, ..*c });
        }
        out
    }
}

/// Noise-free speedup and relative loss of `point` against the
/// unaccelerated baseline at `reference_steps`.
pub fn point_metrics(l: &SimLandscape, profile: &PipelineProfile, point: &GridPoint, reference_steps: u32) -> (f64, f64) {
    let t_ref = profile.base_time(reference_steps);
    let q_ref = profile.q0 + step_quality_delta(&l.curves, reference_steps, profile.n_base);
    let e = l.effect(profile, &point.accel, point.steps);
    let t = profile.base_time(point.steps) / e.speed_mult;
    let q = profile.q0 + e.quality_delta;
    (t_ref / t, (q_ref - q) / q_ref)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    /// Picked option per axis, `None` for identity.
    pub picks: Vec<Option<usize>>,
    pub speed_mult: f64,
    /// Total quality cost, positive.
    pub loss: f64,
}

/// Maximum product of speed multipliers with summed cost within `budget`,
/// choosing at most one option per axis. Every axis implicitly offers an
/// identity option, so the result always exists. Ties go to the lower cost.
pub fn best_feasible(axes: &[Vec<Effect>], budget: f64) -> Choice {
    // Pareto front per axis, identity included, sorted by cost.
    let fronts: Vec<Vec<(Option<usize>, f64, f64)>> = axes
        .iter()
        .map(|opts| {
            let mut all: Vec<(Option<usize>, f64, f64)> = std::iter::once((None, 1.0, 0.0))
                .chain(opts.iter().enumerate().map(|(i, e)| (Some(i), e.speed_mult, -e.quality_delta)))
                .filter(|o| o.2 <= budget + LOSS_EPS)
                .collect();
            all.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.1.total_cmp(&a.1)));
            let mut front = Vec::new();
            let mut best = f64::NEG_INFINITY;
            for o in all {
                if o.1 > best {
                    best = o.1;
                    front.push(o);
                }
            }
            front
        })
        .collect();
    let mut order: Vec<usize> = (0..fronts.len()).collect();
    let max_mult = |i: usize| fronts[i].iter().map(|o| o.1).fold(1.0f64, f64::max);
    order.sort_by(|&a, &b| max_mult(b).total_cmp(&max_mult(a)));
    let mut suffix = vec![1.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = suffix[k + 1] * max_mult(order[k]);
    }

    struct Search<'a> {
        fronts: &'a [Vec<(Option<usize>, f64, f64)>],
        order: &'a [usize],
        suffix: &'a [f64],
        budget: f64,
        cur: Vec<Option<usize>>,
        best: Choice,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, mult: f64, loss: f64) {
            if mult * self.suffix[k] < self.best.speed_mult {
                return;
            }
            if k == self.order.len() {
                if mult > self.best.speed_mult || (mult == self.best.speed_mult && loss < self.best.loss) {
                    self.best = Choice { picks: self.cur.clone(), speed_mult: mult, loss };
                }
                return;
            }
            let axis = self.order[k];
            for &(pick, m, c) in &self.fronts[axis] {
                if loss + c > self.budget + LOSS_EPS {
                    break;
                }
                self.cur[axis] = pick;
                self.go(k + 1, mult * m, loss + c);
            }
            self.cur[axis] = None;
        }
    }
    let mut s = Search {
        fronts: &fronts,
        order: &order,
        suffix: &suffix,
        budget,
        cur: vec![None; axes.len()],
        best: Choice { picks: vec![None; axes.len()], speed_mult: 1.0, loss: 0.0 },
    };
    s.go(0, 1.0, 0.0);
    s.best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasible {
    pub point: GridPoint,
    pub speedup: f64,
    pub loss: f64,
}

/// Largest speedup over `space` whose relative quality loss stays within
/// `delta`. Exact: every grid point is covered by the bound.
pub fn max_feasible_speedup(l: &SimLandscape, profile: &PipelineProfile, space: &SearchSpace, delta: f64) -> Feasible {
    let c = &l.curves;
    let q_ref = profile.q0 + step_quality_delta(c, space.reference_steps, profile.n_base);
    let mut best: Option<Feasible> = None;
    for &n in &space.steps {
        // Cost budget left for methods once the step count is paid for.
        let step_cost = -(step_quality_delta(c, n, profile.n_base) - step_quality_delta(c, space.reference_steps, profile.n_base));
        let budget = delta * q_ref - step_cost;
        if budget < -LOSS_EPS {
            continue;
        }
        let mut axes = vec![
            space.merge_ratios.iter().map(|&r| token_merging_effect(c, r)).collect::<Vec<_>>(),
            space.cache_intervals.iter().map(|&k| feature_reuse_effect(c, k)).collect(),
        ];
        let gates: Vec<u32> = if space.gated_activation { (1..n).collect() } else { Vec::new() };
        axes.push(gates.iter().map(|&g| gated_activation_effect(c, g, n)).collect());
        if space.half_precision {
            axes.push(vec![half_precision_effect(profile.q0)]);
        }
        let choice = best_feasible(&axes, budget.max(0.0));
        let point = GridPoint {
            steps: n,
            accel: AccelConfig {
                merge_ratio: choice.picks[0].map(|i| space.merge_ratios[i]),
                cache_interval: choice.picks[1].map(|i| space.cache_intervals[i]),
                gate_step: choice.picks[2].map(|i| gates[i]),
                half_precision: choice.picks.get(3).copied().flatten().is_some(),
            },
        };
        let (speedup, loss) = point_metrics(l, profile, &point, space.reference_steps);
        if loss > delta + LOSS_EPS {
            // Only reachable through rounding right at the boundary.
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => speedup > b.speedup || (speedup == b.speedup && loss < b.loss),
        };
        if better {
            best = Some(Feasible { point, speedup, loss });
        }
    }
    best.unwrap_or_else(|| {
        let point = space.point(&space.identity());
        let (speedup, loss) = point_metrics(l, profile, &point, space.reference_steps);
        Feasible { point, speedup, loss }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(l: &SimLandscape, p: &PipelineProfile, space: &SearchSpace, delta: f64) -> f64 {
        space
            .coords()
            .iter()
            .map(|c| point_metrics(l, p, &space.point(c), space.reference_steps))
            .filter(|&(_, loss)| loss <= delta + LOSS_EPS)
            .map(|(u, _)| u)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn toy_two_setting_landscape() {
        let q0 = 30.0;
        let axes = vec![vec![
            Effect { speed_mult: 1.5, quality_delta: -0.03 * q0 },
            Effect { speed_mult: 2.0, quality_delta: -0.08 * q0 },
        ]];
        let c = best_feasible(&axes, 0.05 * q0);
        assert_eq!(c.speed_mult, 1.5);
        assert_eq!(c.picks, [Some(0)]);
        assert_eq!(best_feasible(&axes, 0.0).speed_mult, 1.0);
        assert_eq!(best_feasible(&axes, 0.1 * q0).speed_mult, 2.0);
    }

    #[test]
    fn zero_delta_gives_identity() {
        let l = SimLandscape::builtin();
        for p in &l.pipelines {
            let f = max_feasible_speedup(&l, p, &SearchSpace::full(p), 0.0);
            assert_eq!(f.speedup, 1.0, "{}", p.pipeline_class);
            assert!(f.point.accel.is_identity());
        }
    }

    #[test]
    fn space_sizes() {
        let s = SearchSpace::fixed_steps(50);
        assert_eq!(s.len(), 8 * 10 * 50 * 2);
        assert_eq!(s.coords().len(), s.len());
        let p = &SimLandscape::builtin().pipelines[0];
        let full = SearchSpace::full(p);
        assert_eq!(full.steps, [10, 20, 30, 40, 50]);
        assert_eq!(full.coords().len(), full.len());
        assert_eq!(full.point(&full.identity()), GridPoint { steps: 50, accel: AccelConfig::identity() });
    }

    #[test]
    fn neighbors_stay_in_space() {
        let p = &SimLandscape::builtin().pipelines[0];
        let full = SearchSpace::full(p);
        let all: std::collections::HashSet<Coord> = full.coords().into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        use rand::SeedableRng;
        for _ in 0..200 {
            let c = full.random_coord(&mut rng);
            assert!(all.contains(&c));
            for n in full.neighbors(&c) {
                assert!(all.contains(&n), "{n:?}");
            }
        }
    }

    #[test]
    fn builtin_matches_brute_force() {
        let l = SimLandscape::builtin();
        for p in &l.pipelines {
            for delta in [0.01, 0.03, 0.05, 0.1] {
                let space = SearchSpace::fixed_steps(p.n_base);
                let f = max_feasible_speedup(&l, p, &space, delta);
                let b = brute(&l, p, &space, delta);
                assert!((f.speedup - b).abs() <= 1e-12 * b, "{} {delta}: {} vs {b}", p.pipeline_class, f.speedup);
                assert!(f.loss <= delta + LOSS_EPS);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exact_search_equals_enumeration(seed in 0u64..10_000, delta in 0.0f64..0.15) {
            let l = SimLandscape::random(seed);
            let p = &l.pipelines[(seed % 3) as usize];
            let space = SearchSpace::full(p);
            let f = max_feasible_speedup(&l, p, &space, delta);
            let b = brute(&l, p, &space, delta);
            prop_assert!((f.speedup - b).abs() <= 1e-12 * b);
        }

        #[test]
        fn optimum_grows_with_delta(seed in 0u64..10_000, d1 in 0.0f64..0.1, dd in 0.0f64..0.1) {
            let l = SimLandscape::random(seed);
            let p = &l.pipelines[0];
            let space = SearchSpace::fixed_steps(p.n_base);
            let a = max_feasible_speedup(&l, p, &space, d1).speedup;
            let b = max_feasible_speedup(&l, p, &space, d1 + dd).speedup;
            prop_assert!(b >= a);
        }
    }
}
