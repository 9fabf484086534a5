use std::collections::{BTreeMap, BTreeSet};

use super::manifest::AnnotationRecord;
use super::taxonomy::TaskKind;
use crate::{Error, Result};

/// Reliability a rater pool must exceed before its labels are trusted.
pub const RELIABILITY_GATE: f64 = 0.8;

/// Combines several raters' skill labels for one span into the worst score:
/// `"low"` if any rater said low, otherwise `"high"`.
pub fn aggregate_skill_labels(records: &[AnnotationRecord]) -> Result<String> {
    let first = records
        .first()
        .ok_or_else(|| Error::Argument("no skill records to aggregate".into()))?;
    for r in records {
        if r.task_kind != TaskKind::Skill {
            return Err(Error::Argument(format!(
                "record for {} has task kind {}, expected skill",
                r.video_id, r.task_kind
            )));
        }
        if r.video_id != first.video_id || r.start_s != first.start_s || r.end_s != first.end_s {
            return Err(Error::Argument("skill records span more than one segment".into()));
        }
        TaskKind::Skill.taxonomy().require_index(&r.label)?;
    }
    let any_low = records.iter().any(|r| r.label == "low");
    Ok(if any_low { "low" } else { "high" }.to_string())
}

/// Mean pairwise exact-agreement proportion.
///
/// For every segment, every unordered pair of raters in `raters` counts 1 if
/// their labels match and 0 otherwise; the result is the mean over all
/// (segment, pair) cells. Every rater must have labeled exactly the same
/// set of segments.
pub fn inter_rater_reliability(records: &[AnnotationRecord], raters: &[String]) -> Result<f64> {
    let raters: BTreeSet<&str> = raters.iter().map(String::as_str).collect();
    if raters.len() < 2 {
        return Err(Error::Argument(format!(
            "reliability needs at least 2 raters, got {}",
            raters.len()
        )));
    }
    // segment -> rater -> label
    let mut table: BTreeMap<(String, u64, u64), BTreeMap<&str, &str>> = BTreeMap::new();
    for r in records.iter().filter(|r| raters.contains(r.rater_id.as_str())) {
        let key = (r.video_id.clone(), r.start_s.to_bits(), r.end_s.to_bits());
        let row = table.entry(key).or_default();
        if row.insert(r.rater_id.as_str(), r.label.as_str()).is_some() {
            return Err(Error::Argument(format!(
                "rater {} labeled {}@[{}, {}] twice",
                r.rater_id, r.video_id, r.start_s, r.end_s
            )));
        }
    }
    if table.is_empty() {
        return Err(Error::Argument("no records for the given raters".into()));
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for ((video_id, start, _), row) in &table {
        if row.len() != raters.len() {
            return Err(Error::Argument(format!(
                "segment {video_id}@{} was not labeled by every rater",
                f64::from_bits(*start)
            )));
        }
        let labels: Vec<&str> = row.values().copied().collect();
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                total += 1;
                if labels[i] == labels[j] {
                    agree += 1;
                }
            }
        }
    }
    Ok(agree as f64 / total as f64)
}

/// Whether a pool's reliability clears the gate (strictly greater than 0.8).
pub fn passes_reliability_gate(reliability: f64) -> bool {
    reliability > RELIABILITY_GATE
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(video: &str, start: f64, label: &str, rater: &str, task_kind: TaskKind) -> AnnotationRecord {
        AnnotationRecord {
            video_id: video.into(),
            surgeon_id: "s".into(),
            start_s: start,
            end_s: start + 1.0,
            label: label.into(),
            rater_id: rater.into(),
            task_kind,
        }
    }

    fn skill(labels: &[&str]) -> Vec<AnnotationRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| rec("v", 0.0, l, &format!("r{i}"), TaskKind::Skill))
            .collect()
    }

    #[test]
    fn skill_aggregation_examples() {
        assert_eq!(aggregate_skill_labels(&skill(&["high", "high"])).unwrap(), "high");
        assert_eq!(aggregate_skill_labels(&skill(&["high", "low", "high"])).unwrap(), "low");
        assert_eq!(aggregate_skill_labels(&skill(&["low"])).unwrap(), "low");
    }

    #[test]
    fn skill_aggregation_errors() {
        assert!(matches!(aggregate_skill_labels(&[]), Err(Error::Argument(_))));
        let mut mixed = skill(&["high", "low"]);
        mixed[1].start_s = 3.0;
        mixed[1].end_s = 4.0;
        assert!(matches!(aggregate_skill_labels(&mixed), Err(Error::Argument(_))));
    }

    fn pool(labels_per_rater: &[&[&str]]) -> (Vec<AnnotationRecord>, Vec<String>) {
        let mut records = Vec::new();
        let mut raters = Vec::new();
        for (ri, labels) in labels_per_rater.iter().enumerate() {
            let rater = format!("rater{ri}");
            for (si, l) in labels.iter().enumerate() {
                records.push(rec("v", si as f64 * 2.0, l, &rater, TaskKind::SuturingGesture));
            }
            raters.push(rater);
        }
        (records, raters)
    }

    #[test]
    fn reliability_examples() {
        let same = ["R1", "R2", "L1", "C1", "R1", "R2", "L1", "C1", "R1", "R2"];
        let (r, raters) = pool(&[&same, &same]);
        assert_eq!(inter_rater_reliability(&r, &raters).unwrap(), 1.0);

        let (r, raters) = pool(&[&["R1", "R1", "R1"], &["R2", "R2", "R2"]]);
        assert_eq!(inter_rater_reliability(&r, &raters).unwrap(), 0.0);

        // per segment: one agreeing pair out of three
        let a = ["R1"; 6];
        let c = ["C1"; 6];
        let (r, raters) = pool(&[&a, &a, &c]);
        let v = inter_rater_reliability(&r, &raters).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(!passes_reliability_gate(v));
    }

    #[test]
    fn reliability_errors() {
        let (r, raters) = pool(&[&["R1"]]);
        assert!(matches!(inter_rater_reliability(&r, &raters), Err(Error::Argument(_))));
        let (r, raters) = pool(&[&["R1", "R2"], &["R1"]]);
        assert!(matches!(inter_rater_reliability(&r, &raters), Err(Error::Argument(_))));
    }

    #[test]
    fn gate_is_strict() {
        assert!(!passes_reliability_gate(0.8));
        assert!(passes_reliability_gate(0.81));
    }

    proptest! {
        #[test]
        fn skill_aggregation_order_invariant_and_idempotent(
            labels in prop::collection::vec(prop::bool::ANY, 1..8),
            rot in 0usize..8,
        ) {
            let names: Vec<&str> = labels.iter().map(|&b| if b { "high" } else { "low" }).collect();
            let agg = aggregate_skill_labels(&skill(&names)).unwrap();
            let mut rotated = names.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(&aggregate_skill_labels(&skill(&rotated)).unwrap(), &agg);
            prop_assert_eq!(&aggregate_skill_labels(&skill(&[agg.as_str()])).unwrap(), &agg);
        }

        #[test]
        fn reliability_invariant_to_relabeling_and_order(
            table in prop::collection::vec(prop::collection::vec(0usize..3, 3), 1..10),
            rot in 0usize..10,
        ) {
            let codes = ["needle_handling", "needle_driving", "needle_withdrawal"];
            let build = |rows: &[Vec<usize>], names: &[&str]| {
                let mut records = Vec::new();
                for (si, row) in rows.iter().enumerate() {
                    for (ri, &l) in row.iter().enumerate() {
                        records.push(rec("v", si as f64 * 2.0, codes[l], names[ri], TaskKind::Subphase));
                    }
                }
                records
            };
            let names = ["a", "b", "c"];
            let raters: Vec<String> = names.iter().map(|s| s.to_string()).collect();
            let base = inter_rater_reliability(&build(&table, &names), &raters).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));

            let renamed = ["z", "y", "x"];
            let renamed_raters: Vec<String> = renamed.iter().map(|s| s.to_string()).collect();
            let v = inter_rater_reliability(&build(&table, &renamed), &renamed_raters).unwrap();
            prop_assert_eq!(v, base);

            let mut records = build(&table, &names);
            let k = rot % records.len();
            records.rotate_left(k);
            prop_assert_eq!(inter_rater_reliability(&records, &raters).unwrap(), base);
        }
    }
}
