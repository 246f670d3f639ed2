use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{content_lines, parse_number, read, write};
use crate::stats::{mean, sample_variance, Kde};
use crate::types::{BaseStationId, Trace};

/// Kernel bandwidth for the autocorrelation features.
pub const AUTOCORRELATION_BANDWIDTH: f64 = 0.05;
/// Lower bound for the Silverman bandwidth of the variation feature.
pub const MIN_VARIATION_BANDWIDTH: f64 = 1e-3;
/// Shortest trace the caching classifier accepts, in seconds.
pub const MIN_CACHING_DURATION: f64 = 60.0;
/// Stations a sample needs before it contributes to the variation feature.
pub const MIN_STATIONS: usize = 3;
/// Probability above which a verdict is labeled bad.
pub const THRESHOLD: f64 = 0.5;

/// Lag-`k` autocorrelation coefficient. A constant series is perfectly
/// correlated by convention and yields 1.0.
pub fn autocorrelation(series: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("autocorrelation lag must be at least 1".into()));
    }
    if series.len() <= k {
        return Err(Error::InsufficientData(format!(
            "autocorrelation at lag {k} needs more than {k} values, got {}",
            series.len()
        )));
    }
    let m = mean(series);
    let den: f64 = series.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 || series.iter().all(|x| *x == series[0]) {
        return Ok(1.0);
    }
    let num: f64 = series
        .iter()
        .zip(&series[k..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    Ok((num / den).clamp(-1.0, 1.0))
}

fn station_series(trace: &Trace) -> BTreeMap<&BaseStationId, Vec<f64>> {
    let mut out: BTreeMap<&BaseStationId, Vec<f64>> = BTreeMap::new();
    for s in trace.samples() {
        for o in s.observations() {
            out.entry(&o.station).or_default().push(o.rss);
        }
    }
    out
}

/// Mean lag-1 and lag-2 autocorrelation over the stations seen at least
/// three times.
pub fn caching_features(trace: &Trace) -> Result<Vec<f64>> {
    if trace.duration() < MIN_CACHING_DURATION {
        return Err(Error::InsufficientData(format!(
            "caching classification needs {MIN_CACHING_DURATION} s of data, trace lasts {} s",
            trace.duration()
        )));
    }
    let series: Vec<Vec<f64>> = station_series(trace)
        .into_values()
        .filter(|v| v.len() > 2)
        .collect();
    if series.is_empty() {
        return Err(Error::InsufficientData("no station seen three times".into()));
    }
    (1..=2)
        .map(|k| {
            let rs = series
                .iter()
                .map(|v| autocorrelation(v, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(&rs))
        })
        .collect()
}

/// Mean over samples with at least three stations of the variance of the
/// values reported for different stations.
pub fn variation_feature(trace: &Trace) -> Result<f64> {
    let vars: Vec<f64> = trace
        .samples()
        .iter()
        .filter(|s| s.len() >= MIN_STATIONS)
        .map(|s| {
            let v: Vec<f64> = s.observations().iter().map(|o| o.rss).collect();
            sample_variance(&v)
        })
        .collect();
    if vars.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no sample sees {MIN_STATIONS} or more stations"
        )));
    }
    Ok(mean(&vars))
}

/// Two-class naive Bayes with one kernel density per feature and class and
/// equal class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub good: Vec<Kde>,
    pub bad: Vec<Kde>,
}

impl NaiveBayes {
    /// Trains from feature rows of known good and bad clients; `bandwidth`
    /// picks the kernel width from a column of training values.
    pub fn train(
        good: &[Vec<f64>],
        bad: &[Vec<f64>],
        bandwidth: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if good.is_empty() || bad.is_empty() {
            return Err(Error::InsufficientData(
                "classifier training needs good and bad examples".into(),
            ));
        }
        let dim = good[0].len();
        if dim == 0 || good.iter().chain(bad).any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("feature rows differ in length".into()));
        }
        let fit = |rows: &[Vec<f64>]| -> Result<Vec<Kde>> {
            (0..dim)
                .map(|f| {
                    let col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
                    let h = bandwidth(&col);
                    Kde::new(col, h)
                })
                .collect()
        };
        Ok(Self {
            good: fit(good)?,
            bad: fit(bad)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.good.len()
    }

    /// Posterior probability of the bad class.
    pub fn posterior_bad(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "classifier expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let ll = |ks: &[Kde]| ks.iter().zip(x).map(|(k, v)| k.log_density(*v)).sum::<f64>();
        let d = ll(&self.good) - ll(&self.bad);
        Ok(1.0 / (1.0 + d.exp()))
    }
}

/// Trains the caching classifier from traces of known good and caching clients.
pub fn train_caching(good: &[Trace], bad: &[Trace]) -> Result<NaiveBayes> {
    let rows = |ts: &[Trace]| ts.iter().map(caching_features).collect::<Result<Vec<_>>>();
    NaiveBayes::train(&rows(good)?, &rows(bad)?, |_| AUTOCORRELATION_BANDWIDTH)
}

/// Trains the not-signal-strength classifier; `bad` clients report values that
/// do not follow the radio signal.
pub fn train_not_ss(good: &[Trace], bad: &[Trace]) -> Result<NaiveBayes> {
    let rows = |ts: &[Trace]| {
        ts.iter()
            .map(|t| variation_feature(t).map(|f| vec![f]))
            .collect::<Result<Vec<_>>>()
    };
    NaiveBayes::train(&rows(good)?, &rows(bad)?, |c| {
        Kde::silverman(c, MIN_VARIATION_BANDWIDTH)
    })
}

/// Probability that the client caches or updates slowly.
pub fn classify_caching(trace: &Trace, model: &NaiveBayes) -> Result<f64> {
    model.posterior_bad(&caching_features(trace)?)
}

/// Probability that the client's values do not correspond to signal strength.
pub fn classify_not_ss(trace: &Trace, model: &NaiveBayes) -> Result<f64> {
    model.posterior_bad(&[variation_feature(trace)?])
}

/// Both quality classifiers; either may be missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityModel {
    pub caching: Option<NaiveBayes>,
    pub not_ss: Option<NaiveBayes>,
}

/// Classifier outputs for one trace; `None` where no model was trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityVerdict {
    pub caching_or_low_freq: Option<f64>,
    pub not_signal_strength: Option<f64>,
}

impl QualityVerdict {
    pub fn is_caching(&self) -> Option<bool> {
        self.caching_or_low_freq.map(|p| p > THRESHOLD)
    }

    pub fn is_not_ss(&self) -> Option<bool> {
        self.not_signal_strength.map(|p| p > THRESHOLD)
    }
}

impl std::fmt::Display for QualityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let part = |p: Option<f64>, bad: &str| match p {
            Some(p) if p > THRESHOLD => format!("{p:.6} {bad}"),
            Some(p) => format!("{p:.6} good"),
            None => "untrained".to_string(),
        };
        write!(
            f,
            "caching {} not-ss {}",
            part(self.caching_or_low_freq, "caching"),
            part(self.not_signal_strength, "not-ss")
        )
    }
}

const NAMES: [&str; 2] = ["caching", "not-ss"];

impl QualityModel {
    pub fn classify(&self, trace: &Trace) -> Result<QualityVerdict> {
        if self.caching.is_none() && self.not_ss.is_none() {
            return Err(Error::InvalidArgument("quality model is untrained".into()));
        }
        Ok(QualityVerdict {
            caching_or_low_freq: self.caching.as_ref().map(|m| classify_caching(trace, m)).transpose()?,
            not_signal_strength: self.not_ss.as_ref().map(|m| classify_not_ss(trace, m)).transpose()?,
        })
    }

    /// One line per kernel: `classifier class feature bandwidth points..`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("#quality-model\n");
        for (name, nb) in NAMES.iter().zip([&self.caching, &self.not_ss]) {
            let Some(nb) = nb else { continue };
            for (class, ks) in [("good", &nb.good), ("bad", &nb.bad)] {
                for (i, k) in ks.iter().enumerate() {
                    let _ = write!(out, "{name} {class} {i} {}", k.bandwidth());
                    for p in k.points() {
                        let _ = write!(out, " {p}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, "#quality-model")) => {}
            Some((n, _)) => return Err(Error::parse(n, "expected #quality-model header")),
            None => return Err(Error::parse(1, "empty quality model")),
        }
        // classifier -> class -> kernels in feature order
        let mut parts: BTreeMap<&str, [Vec<Kde>; 2]> = BTreeMap::new();
        for (n, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 5 {
                return Err(Error::parse(n, "kernel line needs name, class, feature, bandwidth and points"));
            }
            let name = NAMES
                .iter()
                .find(|x| **x == tok[0])
                .ok_or_else(|| Error::parse(n, format!("unknown classifier {:?}", tok[0])))?;
            let class = match tok[1] {
                "good" => 0,
                "bad" => 1,
                other => return Err(Error::parse(n, format!("unknown class {other:?}"))),
            };
            let feature: usize = tok[2]
                .parse()
                .map_err(|_| Error::parse(n, format!("bad feature index {:?}", tok[2])))?;
            let bw = parse_number(n, "bandwidth", tok[3])?;
            let points = tok[4..]
                .iter()
                .map(|t| parse_number(n, "kernel point", t))
                .collect::<Result<Vec<_>>>()?;
            let slot = &mut parts.entry(name).or_default()[class];
            if feature != slot.len() {
                return Err(Error::parse(n, "features must be listed in order"));
            }
            slot.push(Kde::new(points, bw).map_err(|e| Error::parse(n, e.to_string()))?);
        }
        let mut take = |name: &str| -> Result<Option<NaiveBayes>> {
            match parts.remove(name) {
                None => Ok(None),
                Some([good, bad]) if !good.is_empty() && good.len() == bad.len() => {
                    Ok(Some(NaiveBayes { good, bad }))
                }
                Some(_) => Err(Error::Malformed(format!(
                    "{name} classifier needs the same features for both classes"
                ))),
            }
        };
        Ok(Self {
            caching: take("caching")?,
            not_ss: take("not-ss")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Sample, ValueRange};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three stations around fixed means; each drawn value is held for
    /// `repeat` samples, and `flat` makes every station report the same value.
    fn client(seed: u64, repeat: usize, flat: bool) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = [60.0, 45.0, 30.0];
        let mut held = [0.0; 3];
        let samples = (0..120)
            .map(|t| {
                if t % repeat == 0 {
                    for (h, m) in held.iter_mut().zip(means) {
                        *h = if flat { 50.0 } else { m + rng.random_range(-4.0..4.0) };
                    }
                }
                Sample::from_pairs(
                    t as f64,
                    &[("a", held[0]), ("b", held[1]), ("c", held[2])],
                )
                .unwrap()
            })
            .collect();
        Trace::new(ValueRange::default(), samples, vec![], vec![]).unwrap()
    }

    #[test]
    fn autocorrelation_examples() {
        assert_eq!(autocorrelation(&[3.0; 8], 1).unwrap(), 1.0);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((autocorrelation(&alt, 1).unwrap() + 1.0).abs() < 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(autocorrelation(&noise, 1).unwrap().abs() < 0.05);
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn autocorrelation_matches_direct_formula() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let m = x.iter().sum::<f64>() / 6.0;
        let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let num: f64 = (0..4).map(|t| (x[t] - m) * (x[t + 2] - m)).sum();
        assert!((autocorrelation(&x, 2).unwrap() - num / den).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn autocorrelation_is_bounded(
            xs in prop::collection::vec(-100.0f64..100.0, 3..60),
            k in 1usize..3,
        ) {
            let r = autocorrelation(&xs, k).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
        }
    }

    #[test]
    fn separated_clusters_pick_matching_class() {
        let good = vec![vec![0.0], vec![0.1], vec![-0.1]];
        let bad = vec![vec![0.9], vec![1.0], vec![1.1]];
        let nb = NaiveBayes::train(&good, &bad, |_| 0.05).unwrap();
        assert!(nb.posterior_bad(&[1.0]).unwrap() > 0.5);
        assert!(nb.posterior_bad(&[0.0]).unwrap() < 0.5);
        // far outside both clusters the nearer one still wins
        assert!(nb.posterior_bad(&[40.0]).unwrap() > 0.5);
        assert!(nb.posterior_bad(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn caching_client_scores_higher() {
        let good: Vec<_> = (0..4).map(|s| client(s, 1, false)).collect();
        let bad: Vec<_> = (10..14).map(|s| client(s, 5, false)).collect();
        let nb = train_caching(&good, &bad).unwrap();
        let cached = classify_caching(&client(99, 5, false), &nb).unwrap();
        let fresh = classify_caching(&client(98, 1, false), &nb).unwrap();
        assert!(cached > 0.5 && fresh < 0.5, "{cached} {fresh}");
        let f = caching_features(&client(97, 5, false)).unwrap();
        let g = caching_features(&client(97, 1, false)).unwrap();
        assert!(f[0] > g[0] + 0.3);
    }

    #[test]
    fn flat_client_is_not_ss() {
        let good: Vec<_> = (0..4).map(|s| client(s, 1, false)).collect();
        let bad: Vec<_> = (10..14).map(|s| client(s, 1, true)).collect();
        let nb = train_not_ss(&good, &bad).unwrap();
        assert!(classify_not_ss(&client(99, 1, true), &nb).unwrap() > 0.5);
        assert!(classify_not_ss(&client(98, 1, false), &nb).unwrap() < 0.5);
    }

    #[test]
    fn preconditions() {
        let short = Trace::new(
            ValueRange::default(),
            (0..10)
                .map(|t| Sample::from_pairs(t as f64, &[("a", 1.0), ("b", 2.0), ("c", 3.0)]).unwrap())
                .collect(),
            vec![],
            vec![],
        )
        .unwrap();
        assert!(caching_features(&short).is_err());
        let two = Trace::new(
            ValueRange::default(),
            vec![Sample::from_pairs(0.0, &[("a", 1.0), ("b", 2.0)]).unwrap()],
            vec![],
            vec![],
        )
        .unwrap();
        assert!(variation_feature(&two).is_err());
        assert!(QualityModel::default().classify(&short).is_err());
    }

    #[test]
    fn model_file_round_trips() {
        let good: Vec<_> = (0..3).map(|s| client(s, 1, false)).collect();
        let bad: Vec<_> = (10..13).map(|s| client(s, 4, true)).collect();
        let m = QualityModel {
            caching: Some(train_caching(&good, &bad).unwrap()),
            not_ss: Some(train_not_ss(&good, &bad).unwrap()),
        };
        let text = m.to_text();
        let back = QualityModel::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        let v = back.classify(&client(50, 4, true)).unwrap();
        assert_eq!(v.is_caching(), Some(true));
        assert_eq!(v.is_not_ss(), Some(true));
    }
}
