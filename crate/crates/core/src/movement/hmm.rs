use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::{content_lines, parse_number};
use crate::stats::{GridDensity, Kde};
use crate::types::Motion;

use super::features::{FeatureKind, DEFAULT_WINDOW};

pub const DEFAULT_HISTORY: usize = 10;
pub const STILL_BANDWIDTH: f64 = 0.1;
pub const MOVING_BANDWIDTH: f64 = 1.5;
pub const GRID_LO: f64 = 0.0;
pub const GRID_HI: f64 = 50.0;
pub const GRID_STEP: f64 = 0.1;
pub const EMISSION_FLOOR: f64 = 1e-9;

/// Most likely state sequence of a discrete HMM, computed in log space.
///
/// `log_emit[t][s]` is the log likelihood of observation `t` in state `s`.
/// Ties resolve to the lower state index.
pub fn viterbi(log_init: &[f64], log_trans: &[Vec<f64>], log_emit: &[Vec<f64>]) -> Vec<usize> {
    let n = log_init.len();
    if log_emit.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut score: Vec<f64> = (0..n).map(|s| log_init[s] + log_emit[0][s]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(log_emit.len());
    for emit in &log_emit[1..] {
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut from = vec![0; n];
        for to in 0..n {
            for prev in 0..n {
                let v = score[prev] + log_trans[prev][to];
                if v > next[to] {
                    next[to] = v;
                    from[to] = prev;
                }
            }
            next[to] += emit[to];
        }
        back.push(from);
        score = next;
    }
    let mut state = (0..n).fold(0, |best, s| if score[s] > score[best] { s } else { best });
    let mut path = vec![state; log_emit.len()];
    for (t, from) in back.iter().enumerate().rev() {
        state = from[state];
        path[t] = state;
    }
    path
}

/// Transition probabilities between the two motion states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions {
    /// Probability of changing from moving to still.
    pub p_ms: f64,
    /// Probability of changing from still to moving.
    pub p_sm: f64,
}

impl Transitions {
    pub fn new(p_ms: f64, p_sm: f64) -> Result<Self> {
        for p in [p_ms, p_sm] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "transition probability must be in (0, 1), got {p}"
                )));
            }
        }
        Ok(Self { p_ms, p_sm })
    }

    /// Favors staying in the current state; few spurious movement reports.
    pub const COMM_FRIENDLY: Transitions = Transitions {
        p_ms: 0.011,
        p_sm: 0.0011,
    };

    /// Switches to moving eagerly and leaves it reluctantly.
    pub const POSITION_FRIENDLY: Transitions = Transitions {
        p_ms: 0.00011,
        p_sm: 0.5,
    };

    /// `[from][to]` log matrix with state 0 = still, 1 = moving.
    pub fn log_matrix(&self) -> Vec<Vec<f64>> {
        vec![
            vec![(1.0 - self.p_sm).ln(), self.p_sm.ln()],
            vec![self.p_ms.ln(), (1.0 - self.p_ms).ln()],
        ]
    }
}

/// Named transition presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    CommFriendly,
    PositionFriendly,
}

impl Preset {
    pub fn transitions(&self) -> Transitions {
        match self {
            Preset::CommFriendly => Transitions::COMM_FRIENDLY,
            Preset::PositionFriendly => Transitions::POSITION_FRIENDLY,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::CommFriendly => "comm-friendly",
            Preset::PositionFriendly => "position-friendly",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comm-friendly" => Ok(Preset::CommFriendly),
            "position-friendly" => Ok(Preset::PositionFriendly),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

/// Emission densities for still and moving, discretized on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Emissions {
    pub still: GridDensity,
    pub moving: GridDensity,
    pub bandwidths: (f64, f64),
}

/// Grid on which emission densities are tabulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lo: GRID_LO,
            hi: GRID_HI,
            step: GRID_STEP,
        }
    }
}

/// Kernel density estimates of the feature per state.
pub fn train_emissions(
    still: &[f64],
    moving: &[f64],
    bandwidths: (f64, f64),
    grid: Grid,
) -> Result<Emissions> {
    let class = |values: &[f64], bw: f64, name: &str| -> Result<GridDensity> {
        if values.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no training values for state {name}"
            )));
        }
        GridDensity::from_kde(&Kde::new(values.to_vec(), bw)?, grid.lo, grid.hi, grid.step)
    };
    Ok(Emissions {
        still: class(still, bandwidths.0, "still")?,
        moving: class(moving, bandwidths.1, "moving")?,
        bandwidths,
    })
}

impl Emissions {
    pub fn log_likelihoods(&self, feature: f64) -> Vec<f64> {
        vec![
            self.still.density(feature).max(EMISSION_FLOOR).ln(),
            self.moving.density(feature).max(EMISSION_FLOOR).ln(),
        ]
    }

    pub fn grid(&self) -> Grid {
        Grid {
            lo: self.still.lo(),
            hi: self.still.hi(),
            step: self.still.step(),
        }
    }
}

/// Two-state still/moving hidden Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementHmm {
    pub transitions: Transitions,
    pub emissions: Emissions,
    pub history: usize,
}

fn state(i: usize) -> Motion {
    if i == 0 {
        Motion::Still
    } else {
        Motion::Moving
    }
}

impl MovementHmm {
    pub fn new(transitions: Transitions, emissions: Emissions, history: usize) -> Result<Self> {
        if history == 0 {
            return Err(Error::InvalidArgument("history must be at least 1".into()));
        }
        Ok(Self {
            transitions,
            emissions,
            history,
        })
    }

    /// Viterbi path over the whole sequence with equal initial probabilities.
    pub fn decode(&self, features: &[f64]) -> Vec<Motion> {
        let init = vec![0.5f64.ln(); 2];
        let emit: Vec<Vec<f64>> = features
            .iter()
            .map(|f| self.emissions.log_likelihoods(*f))
            .collect();
        viterbi(&init, &self.transitions.log_matrix(), &emit)
            .into_iter()
            .map(state)
            .collect()
    }

    /// Ending state of the best path over the last `history` features.
    pub fn detect(&self, features: &[f64]) -> Result<Motion> {
        if features.is_empty() {
            return Err(Error::InsufficientData("empty feature history".into()));
        }
        let start = features.len().saturating_sub(self.history);
        Ok(*self.decode(&features[start..]).last().expect("non-empty"))
    }
}

/// A trained detector as stored on disk: emissions plus the feature settings
/// they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementModel {
    pub feature: FeatureKind,
    pub window: usize,
    pub k: Option<usize>,
    pub history: usize,
    pub emissions: Emissions,
}

impl MovementModel {
    pub fn hmm(&self, transitions: Transitions) -> Result<MovementHmm> {
        MovementHmm::new(transitions, self.emissions.clone(), self.history)
    }

    pub fn to_text(&self) -> String {
        let g = self.emissions.grid();
        let mut out = String::from("#movement-model\n");
        let _ = writeln!(out, "feature {}", self.feature.as_str());
        let _ = writeln!(out, "window {}", self.window);
        let _ = match self.k {
            Some(k) => writeln!(out, "k {k}"),
            None => writeln!(out, "k all"),
        };
        let _ = writeln!(out, "history {}", self.history);
        let _ = writeln!(out, "grid {} {} {}", g.lo, g.hi, g.step);
        let (bs, bm) = self.emissions.bandwidths;
        let _ = writeln!(out, "bandwidth {bs} {bm}");
        for (name, d) in [("still", &self.emissions.still), ("moving", &self.emissions.moving)] {
            out.push_str(name);
            for v in d.values() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut feature = FeatureKind::default();
        let mut window = DEFAULT_WINDOW;
        let mut k = None;
        let mut history = DEFAULT_HISTORY;
        let mut grid = Grid::default();
        let mut bandwidths = (STILL_BANDWIDTH, MOVING_BANDWIDTH);
        let (mut still, mut moving) = (None, None);
        let int = |n: usize, s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(n, format!("bad integer {s:?}")))
        };
        for (n, line) in content_lines(text) {
            if line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let want = |len: usize| -> Result<()> {
                if rest.len() != len {
                    return Err(Error::parse(n, format!("`{key}` expects {len} values")));
                }
                Ok(())
            };
            match key {
                "feature" => {
                    want(1)?;
                    feature = rest[0].parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
                }
                "window" => {
                    want(1)?;
                    window = int(n, rest[0])?;
                }
                "k" => {
                    want(1)?;
                    k = if rest[0] == "all" { None } else { Some(int(n, rest[0])?) };
                }
                "history" => {
                    want(1)?;
                    history = int(n, rest[0])?;
                }
                "grid" => {
                    want(3)?;
                    grid = Grid {
                        lo: parse_number(n, "grid start", rest[0])?,
                        hi: parse_number(n, "grid end", rest[1])?,
                        step: parse_number(n, "grid step", rest[2])?,
                    };
                }
                "bandwidth" => {
                    want(2)?;
                    bandwidths = (
                        parse_number(n, "bandwidth", rest[0])?,
                        parse_number(n, "bandwidth", rest[1])?,
                    );
                }
                "still" | "moving" => {
                    let values = rest
                        .iter()
                        .map(|v| parse_number(n, "density", v))
                        .collect::<Result<Vec<_>>>()?;
                    let d = GridDensity::from_normalized(grid.lo, grid.step, values)
                        .map_err(|e| Error::parse(n, e.to_string()))?;
                    if key == "still" {
                        still = Some(d);
                    } else {
                        moving = Some(d);
                    }
                }
                other => return Err(Error::parse(n, format!("unknown key {other:?}"))),
            }
        }
        let (Some(still), Some(moving)) = (still, moving) else {
            return Err(Error::parse(1, "model needs `still` and `moving` densities"));
        };
        if still.values().len() != moving.values().len() {
            return Err(Error::invariant("still and moving grids differ in length"));
        }
        Ok(Self {
            feature,
            window,
            k,
            history,
            emissions: Emissions {
                still,
                moving,
                bandwidths,
            },
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&crate::io::read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write(path.as_ref(), &self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_pdf;
    use proptest::prelude::*;

    /// Exhaustive search over all state sequences.
    fn brute_force(init: &[f64], trans: &[Vec<f64>], emit: &[Vec<f64>]) -> Vec<usize> {
        let t = emit.len();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for code in 0..(1usize << t) {
            let path: Vec<usize> = (0..t).map(|i| (code >> (t - 1 - i)) & 1).collect();
            let mut s = init[path[0]] + emit[0][path[0]];
            for i in 1..t {
                s += trans[path[i - 1]][path[i]] + emit[i][path[i]];
            }
            if s > best.0 {
                best = (s, path);
            }
        }
        best.1
    }

    fn trained() -> Emissions {
        train_emissions(&[0.0, 0.2], &[10.0, 11.0], (0.1, 1.5), Grid::default()).unwrap()
    }

    #[test]
    fn viterbi_matches_brute_force_fixed() {
        let init = vec![0.5f64.ln(); 2];
        let trans = Transitions::COMM_FRIENDLY.log_matrix();
        let emit: Vec<Vec<f64>> = [0.1, 0.9, 0.8, 0.2, 0.3]
            .iter()
            .map(|p: &f64| vec![p.ln(), (1.0 - p).ln()])
            .collect();
        assert_eq!(viterbi(&init, &trans, &emit), brute_force(&init, &trans, &emit));
    }

    #[test]
    fn dominant_likelihood_decides() {
        let hmm = MovementHmm::new(Transitions::COMM_FRIENDLY, trained(), 10).unwrap();
        assert_eq!(hmm.detect(&[0.0; 10]).unwrap(), Motion::Still);
        assert_eq!(hmm.detect(&[10.2; 10]).unwrap(), Motion::Moving);
        assert!(hmm.detect(&[]).is_err());
    }

    #[test]
    fn emissions_match_kde_oracle() {
        let pts = [1.0, 1.3, 4.0];
        let e = train_emissions(&pts, &pts, (0.1, 1.5), Grid::default()).unwrap();
        let raw = |x: f64, h: f64| pts.iter().map(|p| normal_pdf(x, *p, h)).sum::<f64>() / 3.0;
        let norm: f64 = (0..500).map(|i| raw(0.05 + i as f64 * 0.1, 1.5)).sum::<f64>() * 0.1;
        for x in [0.05, 1.25, 3.95, 12.05] {
            let want = raw(x, 1.5) / norm;
            assert!((e.moving.density(x) - want).abs() < 1e-9);
        }
        assert!((e.still.integral() - 1.0).abs() < 1e-3);
        assert!((e.moving.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn separated_classes_favor_correct_state() {
        let e = trained();
        let at_still = e.log_likelihoods(0.1);
        let at_moving = e.log_likelihoods(10.5);
        assert!(at_still[0] > at_still[1]);
        assert!(at_moving[1] > at_moving[0]);
    }

    #[test]
    fn training_rejects_empty_class() {
        assert!(train_emissions(&[], &[1.0], (0.1, 1.5), Grid::default()).is_err());
    }

    #[test]
    fn model_file_round_trips() {
        let model = MovementModel {
            feature: FeatureKind::Variance,
            window: 10,
            k: Some(3),
            history: 10,
            emissions: trained(),
        };
        let text = model.to_text();
        let back = MovementModel::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.k, Some(3));
    }

    proptest! {
        #[test]
        fn viterbi_equals_enumeration(
            len in 1usize..=12,
            p_ms in 0.001f64..0.999,
            p_sm in 0.001f64..0.999,
            seed_emit in prop::collection::vec((1e-6f64..1.0, 1e-6f64..1.0), 12),
        ) {
            let init = vec![0.5f64.ln(); 2];
            let trans = Transitions::new(p_ms, p_sm).unwrap().log_matrix();
            let emit: Vec<Vec<f64>> = seed_emit[..len].iter().map(|(a, b)| vec![a.ln(), b.ln()]).collect();
            prop_assert_eq!(viterbi(&init, &trans, &emit), brute_force(&init, &trans, &emit));
        }

        #[test]
        fn symmetric_model_follows_last_likelihood(
            p in 0.001f64..0.4,
            features in prop::collection::vec(0.0f64..20.0, 1..12),
        ) {
            let e = train_emissions(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0], (1.0, 1.0), Grid::default()).unwrap();
            let e = Emissions { moving: e.still.clone(), ..e };
            let hmm = MovementHmm::new(Transitions::new(p, p).unwrap(), e, 12).unwrap();
            // identical emissions make every state equally likely; ties go to still
            prop_assert_eq!(hmm.detect(&features).unwrap(), Motion::Still);
        }

        #[test]
        fn higher_moving_to_still_never_reduces_still_verdicts(
            features in prop::collection::vec(0.0f64..15.0, 10..40),
            lo in 0.0001f64..0.01,
            bump in 0.0f64..0.04,
        ) {
            let e = train_emissions(&[0.0, 0.5, 1.0], &[3.0, 6.0, 9.0], (0.1, 1.5), Grid::default()).unwrap();
            let count = |p_ms: f64| {
                let hmm = MovementHmm::new(Transitions::new(p_ms, 0.0011).unwrap(), e.clone(), 10).unwrap();
                (1..=features.len())
                    .filter(|&n| hmm.detect(&features[..n]).unwrap() == Motion::Still)
                    .count()
            };
            prop_assert!(count(lo + bump) >= count(lo));
        }
    }
}
