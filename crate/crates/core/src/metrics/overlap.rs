use crate::data::LabelMask;
use crate::error::{Error, Result};

pub(crate) fn check_same_shape(pred: &LabelMask, gt: &LabelMask) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} does not match ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

/// Dice and Jaccard in percent. Two empty masks agree perfectly (100, 100).
pub fn dice_jaccard(pred: &LabelMask, gt: &LabelMask) -> Result<(f64, f64)> {
    check_same_shape(pred, gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        let (a, b) = (a != 0, b != 0);
        inter += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    if p + g == 0 {
        return Ok((100.0, 100.0));
    }
    let dice = 2.0 * inter as f64 / (p + g) as f64;
    let jaccard = inter as f64 / (p + g - inter) as f64;
    Ok((100.0 * dice, 100.0 * jaccard))
}
