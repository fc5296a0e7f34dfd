//! Corpus-level metric summary shared by the command-line reports.

use serde::Serialize;

use crate::graphic::aggregate;

/// A corpus value together with the number of samples that produced it.
/// `value` is present exactly when `samples > 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CorpusMetric {
    pub value: Option<f64>,
    pub samples: usize,
}

impl CorpusMetric {
    /// Unweighted mean of the present per-sample values.
    pub fn mean_of(per_sample: &[Option<f64>]) -> Self {
        CorpusMetric {
            value: aggregate(per_sample),
            samples: per_sample.iter().flatten().count(),
        }
    }

    /// A single corpus-wide value computed from `samples` inputs.
    pub fn single(value: f64, samples: usize) -> Self {
        if samples == 0 {
            CorpusMetric::default()
        } else {
            CorpusMetric {
                value: Some(value),
                samples,
            }
        }
    }

    pub fn is_present(&self) -> bool {
        self.value.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub r_ove: CorpusMetric,
    pub r_und: CorpusMetric,
    pub r_ali: CorpusMetric,
    pub r_occ: CorpusMetric,
    pub r_com: CorpusMetric,
    pub r_shm: CorpusMetric,
    pub r_sub: CorpusMetric,
    pub fid: CorpusMetric,
    pub cfid: CorpusMetric,
}

impl MetricReport {
    /// `(name, metric)` pairs in field order.
    pub fn entries(&self) -> [(&'static str, &CorpusMetric); 9] {
        [
            ("r_ove", &self.r_ove),
            ("r_und", &self.r_und),
            ("r_ali", &self.r_ali),
            ("r_occ", &self.r_occ),
            ("r_com", &self.r_com),
            ("r_shm", &self.r_shm),
            ("r_sub", &self.r_sub),
            ("fid", &self.fid),
            ("cfid", &self.cfid),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presence_follows_counts() {
        let m = CorpusMetric::mean_of(&[Some(0.5), None, Some(1.0)]);
        assert_eq!(m, CorpusMetric { value: Some(0.75), samples: 2 });
        let none = CorpusMetric::mean_of(&[None, None]);
        assert!(!none.is_present());
        assert_eq!(none.samples, 0);
        assert_eq!(CorpusMetric::single(3.0, 0), CorpusMetric::default());
    }

    #[test]
    fn serializes_absent_as_null() {
        let r = MetricReport::default();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["cfid"], serde_json::json!({"value": null, "samples": 0}));
        assert_eq!(r.entries().len(), 9);
    }
}
