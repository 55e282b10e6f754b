use super::SimError;
use crate::dsp::Label;

/// Bits per attempted symbol through an `A`-ary channel with accuracy `P`:
/// `log2 A + P log2 P + (1-P) log2((1-P)/(A-1))`, with `0 log 0 = 0`.
///
/// Below chance (`P < 1/A`) the value is positive again; see
/// [`reported_itr`] for the clamped figure used in typing summaries.
pub fn itr(alphabet_size: usize, accuracy: f64) -> f64 {
    let a = alphabet_size as f64;
    let p = accuracy;
    let hit = if p > 0.0 { p * p.log2() } else { 0.0 };
    let miss = if p < 1.0 {
        (1.0 - p) * ((1.0 - p) / (a - 1.0)).log2()
    } else {
        0.0
    };
    a.log2() + hit + miss
}

/// [`itr`] with sub-chance accuracy reported as zero bits.
pub fn reported_itr(alphabet_size: usize, accuracy: f64) -> f64 {
    if accuracy < 1.0 / alphabet_size as f64 {
        0.0
    } else {
        itr(alphabet_size, accuracy)
    }
}

/// Mean of the per-class recalls.
pub fn balanced_accuracy(predicted: &[Label], truth: &[Label]) -> Result<f64, SimError> {
    if predicted.len() != truth.len() {
        return Err(SimError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (p, t) in predicted.iter().zip(truth) {
        let c = t.is_positive() as usize;
        totals[c] += 1;
        hits[c] += (p == t) as usize;
    }
    if totals[0] == 0 || totals[1] == 0 {
        return Err(SimError::SingleClassTruth);
    }
    Ok(0.5 * (hits[0] as f64 / totals[0] as f64 + hits[1] as f64 / totals[1] as f64))
}
