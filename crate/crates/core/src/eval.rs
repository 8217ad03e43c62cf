//! Scoring predicted component labels against ground truth.

use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::Class;
use crate::error::{Error, Result};
use crate::image::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRegion {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub class: Class,
}

impl TruthRegion {
    pub fn new(rect: Rect, class: Class) -> Self {
        Self {
            x: rect.x,
            y: rect.y,
            w: rect.w,
            h: rect.h,
            class,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

/// Annotated regions of one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image: String,
    pub regions: Vec<TruthRegion>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn text_count(&self) -> usize {
        self.regions.iter().filter(|r| r.class == Class::Text).count()
    }
}

/// Counts per (truth, predicted) category: B = background/graphics, T = text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub bb: u64,
    pub bt: u64,
    pub tb: u64,
    pub tt: u64,
}

impl ConfusionTally {
    pub fn total(&self) -> u64 {
        self.bb + self.bt + self.tb + self.tt
    }

    fn record(&mut self, truth: Class, predicted: Class) {
        match (truth, predicted) {
            (Class::Graphics, Class::Graphics) => self.bb += 1,
            (Class::Graphics, Class::Text) => self.bt += 1,
            (Class::Text, Class::Graphics) => self.tb += 1,
            (Class::Text, Class::Text) => self.tt += 1,
        }
    }

    /// True classifications over all counted components.
    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }

    /// Share of text truths that did not end up as a text prediction.
    pub fn text_loss_rate(&self) -> Result<f64> {
        let texts = self.tt + self.tb;
        if texts == 0 {
            return Err(Error::UndefinedMetric("no text regions counted".into()));
        }
        Ok(self.tb as f64 / texts as f64)
    }
}

impl Add for ConfusionTally {
    type Output = ConfusionTally;

    fn add(self, o: ConfusionTally) -> ConfusionTally {
        ConfusionTally {
            bb: self.bb + o.bb,
            bt: self.bt + o.bt,
            tb: self.tb + o.tb,
            tt: self.tt + o.tt,
        }
    }
}

impl AddAssign for ConfusionTally {
    fn add_assign(&mut self, o: ConfusionTally) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionTally {
    fn sum<I: Iterator<Item = ConfusionTally>>(iter: I) -> Self {
        iter.fold(ConfusionTally::default(), Add::add)
    }
}

pub fn accuracy(t: &ConfusionTally) -> Result<f64> {
    let total = t.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy over zero components".into()));
    }
    Ok((t.bb + t.tt) as f64 / total as f64)
}

/// One-to-one assignment of predictions to truth regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// For each prediction, the matched truth index.
    pub truth_for_pred: Vec<Option<usize>>,
    /// For each truth region, the matched prediction index.
    pub pred_for_truth: Vec<Option<usize>>,
}

impl Matching {
    pub fn pair_count(&self) -> usize {
        self.truth_for_pred.iter().flatten().count()
    }
}

/// Greedy matching, highest IoU first, over pairs with IoU at or above `iou_threshold`.
///
/// Ties are broken on the boxes themselves so the result does not depend on
/// the order predictions are listed in.
pub fn match_pairs(predicted: &[(Rect, Class)], truth: &GroundTruth, iou_threshold: f64) -> Result<Matching> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::contract(format!(
            "iou threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    let mut candidates = Vec::new();
    for (pi, (prect, pclass)) in predicted.iter().enumerate() {
        for (ti, t) in truth.regions.iter().enumerate() {
            let iou = prect.iou(&t.rect());
            if iou >= iou_threshold {
                candidates.push((iou, ti, *prect, *pclass, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then((a.3 == Class::Graphics).cmp(&(b.3 == Class::Graphics)))
    });
    let mut m = Matching {
        truth_for_pred: vec![None; predicted.len()],
        pred_for_truth: vec![None; truth.regions.len()],
    };
    for (_, ti, _, _, pi) in candidates {
        if m.truth_for_pred[pi].is_none() && m.pred_for_truth[ti].is_none() {
            m.truth_for_pred[pi] = Some(ti);
            m.pred_for_truth[ti] = Some(pi);
        }
    }
    Ok(m)
}

/// Tallies one image.
///
/// Matched pairs count by (truth, predicted) class. Unmatched predictions are
/// scored against an implicit background truth. Unmatched text truths are
/// lost text (TB); unmatched graphics truths are not counted.
pub fn match_regions(predicted: &[(Rect, Class)], truth: &GroundTruth, iou_threshold: f64) -> Result<ConfusionTally> {
    let m = match_pairs(predicted, truth, iou_threshold)?;
    let mut tally = ConfusionTally::default();
    for (pi, (_, pclass)) in predicted.iter().enumerate() {
        let tclass = m.truth_for_pred[pi].map_or(Class::Graphics, |ti| truth.regions[ti].class);
        tally.record(tclass, *pclass);
    }
    for (ti, t) in truth.regions.iter().enumerate() {
        if m.pred_for_truth[ti].is_none() && t.class == Class::Text {
            tally.tb += 1;
        }
    }
    Ok(tally)
}

/// One CSV report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub image: String,
    pub bb: u64,
    pub bt: u64,
    pub tb: u64,
    pub tt: u64,
    /// Empty when the image has no counted components.
    pub accuracy: Option<String>,
}

impl ReportRow {
    pub fn new(image: impl Into<String>, t: &ConfusionTally) -> Self {
        Self {
            image: image.into(),
            bb: t.bb,
            bt: t.bt,
            tb: t.tb,
            tt: t.tt,
            accuracy: t.accuracy().ok().map(|a| format!("{a:.6}")),
        }
    }
}

/// Writes `image,bb,bt,tb,tt,accuracy` rows.
pub fn write_report<W: std::io::Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Format(format!("csv: {e}"));
    for row in rows {
        w.serialize(row).map_err(map)?;
    }
    if rows.is_empty() {
        w.write_record(["image", "bb", "bt", "tb", "tt", "accuracy"])
            .map_err(map)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn truth(regions: &[(Rect, Class)]) -> GroundTruth {
        GroundTruth {
            image: "t".into(),
            regions: regions.iter().map(|&(r, c)| TruthRegion::new(r, c)).collect(),
        }
    }

    fn four() -> Vec<(Rect, Class)> {
        vec![
            (Rect::new(0, 0, 100, 20), Class::Text),
            (Rect::new(0, 40, 100, 20), Class::Text),
            (Rect::new(200, 0, 50, 50), Class::Graphics),
            (Rect::new(0, 100, 300, 4), Class::Graphics),
        ]
    }

    #[test]
    fn perfect_run() {
        let t = match_regions(&four(), &truth(&four()), 0.5).unwrap();
        assert_eq!(t, ConfusionTally { bb: 2, bt: 0, tb: 0, tt: 2 });
        assert_eq!(t.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn text_predicted_as_graphics_is_tb() {
        let mut pred = four();
        pred[1].1 = Class::Graphics;
        let t = match_regions(&pred, &truth(&four()), 0.5).unwrap();
        assert_eq!(t.tb, 1);
        assert_eq!(t.tt + t.bb, 3);
    }

    #[test]
    fn low_iou_text_prediction_is_spurious() {
        let gt = truth(&[(Rect::new(0, 0, 10, 10), Class::Graphics)]);
        // overlap 50 over union 150 => IoU 1/3
        let pred = [(Rect::new(5, 0, 10, 10), Class::Text)];
        assert!((pred[0].0.iou(&gt.regions[0].rect()) - 50.0 / 150.0).abs() < 1e-12);
        let t = match_regions(&pred, &gt, 0.5).unwrap();
        assert_eq!(t, ConfusionTally { bt: 1, ..Default::default() });
    }

    #[test]
    fn unmatched_text_truth_is_tb_and_unmatched_graphics_prediction_is_bb() {
        let gt = truth(&[(Rect::new(0, 0, 50, 10), Class::Text)]);
        let pred = [(Rect::new(100, 100, 5, 5), Class::Graphics)];
        let t = match_regions(&pred, &gt, 0.5).unwrap();
        assert_eq!(t, ConfusionTally { bb: 1, tb: 1, ..Default::default() });
    }

    #[test]
    fn empty_inputs_give_zero_tally() {
        let t = match_regions(&[], &truth(&[]), 0.5).unwrap();
        assert_eq!(t.total(), 0);
        assert!(matches!(t.accuracy(), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn bad_threshold_is_rejected() {
        assert!(match_regions(&[], &truth(&[]), 0.0).is_err());
        assert!(match_regions(&[], &truth(&[]), 1.5).is_err());
    }

    #[test]
    fn accuracy_arithmetic() {
        let t = ConfusionTally { bb: 60, tt: 38, bt: 1, tb: 1 };
        assert!((accuracy(&t).unwrap() - 0.98).abs() < 1e-12);
        let t = ConfusionTally { tt: 4, ..Default::default() };
        assert_eq!(accuracy(&t).unwrap(), 1.0);
    }

    #[test]
    fn greedy_prefers_highest_iou() {
        let gt = truth(&[(Rect::new(0, 0, 10, 10), Class::Text)]);
        let pred = [
            (Rect::new(0, 0, 10, 12), Class::Graphics),
            (Rect::new(0, 0, 10, 10), Class::Text),
        ];
        let m = match_pairs(&pred, &gt, 0.5).unwrap();
        assert_eq!(m.pred_for_truth, vec![Some(1)]);
        let t = match_regions(&pred, &gt, 0.5).unwrap();
        assert_eq!(t, ConfusionTally { tt: 1, bb: 1, ..Default::default() });
    }

    #[test]
    fn truth_json_schema() {
        let gt = truth(&[(Rect::new(1, 2, 3, 4), Class::Text)]);
        let json = serde_json::to_string(&gt).unwrap();
        assert_eq!(
            json,
            r#"{"image":"t","regions":[{"x":1,"y":2,"w":3,"h":4,"class":"text"}]}"#
        );
    }

    #[test]
    fn report_csv_columns() {
        let mut out = Vec::new();
        let rows = [ReportRow::new("a", &ConfusionTally { bb: 1, tt: 1, bt: 0, tb: 2 })];
        write_report(&mut out, &rows).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "image,bb,bt,tb,tt,accuracy\na,1,0,2,1,0.500000\n"
        );
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (0u32..60, 0u32..60, 1u32..40, 1u32..40).prop_map(|(x, y, w, h)| Rect::new(x, y, w, h))
    }

    fn arb_class() -> impl Strategy<Value = Class> {
        prop_oneof![Just(Class::Text), Just(Class::Graphics)]
    }

    proptest! {
        #[test]
        fn tally_ignores_prediction_order(
            pred in proptest::collection::vec((arb_rect(), arb_class()), 0..8),
            gt in proptest::collection::vec((arb_rect(), arb_class()), 0..8),
            seed in any::<u64>(),
        ) {
            let gt = truth(&gt);
            let mut shuffled = pred.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = ((seed >> (i % 32)).wrapping_mul(2654435761) as usize) % (i + 1);
                shuffled.swap(i, j);
            }
            let a = match_regions(&pred, &gt, 0.3).unwrap();
            let b = match_regions(&shuffled, &gt, 0.3).unwrap();
            prop_assert_eq!(a, b);
            if let Ok(acc) = a.accuracy() {
                prop_assert!((0.0..=1.0).contains(&acc));
            }
        }

        #[test]
        fn higher_threshold_never_adds_pairs(
            pred in proptest::collection::vec((arb_rect(), arb_class()), 0..8),
            gt in proptest::collection::vec((arb_rect(), arb_class()), 0..8),
            lo in 0.05f64..0.9, step in 0.0f64..0.5,
        ) {
            let gt = truth(&gt);
            let hi = (lo + step).min(1.0);
            let a = match_pairs(&pred, &gt, lo).unwrap().pair_count();
            let b = match_pairs(&pred, &gt, hi).unwrap().pair_count();
            prop_assert!(b <= a);
        }

        #[test]
        fn flipping_labels_swaps_categories(
            gt in proptest::collection::vec((arb_rect(), arb_class()), 0..8),
        ) {
            // every truth region predicted exactly, boxes distinct: all predictions are matched
            let mut rects: Vec<Rect> = gt.iter().map(|g| g.0).collect();
            rects.sort();
            rects.dedup();
            prop_assume!(rects.len() == gt.len());
            let truth_set = truth(&gt);
            let pred: Vec<(Rect, Class)> = gt.clone();
            let flipped: Vec<(Rect, Class)> = gt.iter().map(|&(r, c)| (r, c.flipped())).collect();
            let a = match_regions(&pred, &truth_set, 1.0).unwrap();
            let b = match_regions(&flipped, &truth_set, 1.0).unwrap();
            prop_assert_eq!(match_pairs(&pred, &truth_set, 1.0).unwrap().pair_count(), gt.len());
            prop_assert_eq!((a.tt, a.tb, a.bb, a.bt), (b.tb, b.tt, b.bt, b.bb));
        }
    }
}
