//! Batch assembly under a target-unit budget.

use crate::error::{Error, Result};

/// Greedy fill in length-sorted order: examples are sorted by target length
/// and packed until the padded batch size — examples × longest target in the
/// batch — would exceed the budget. Returns index batches; every example
/// appears exactly once.
pub fn make_batches(target_lens: &[usize], batch_target_units: usize) -> Result<Vec<Vec<usize>>> {
    for (i, &len) in target_lens.iter().enumerate() {
        if len > batch_target_units {
            return Err(Error::InvalidArgument(format!(
                "make_batches: example {i} has {len} target units, budget is {batch_target_units}"
            )));
        }
        if len == 0 {
            return Err(Error::InvalidArgument(format!(
                "make_batches: example {i} has an empty target"
            )));
        }
    }
    let mut order: Vec<usize> = (0..target_lens.len()).collect();
    order.sort_by_key(|&i| target_lens[i]);
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_max = 0usize;
    for &i in &order {
        let new_max = current_max.max(target_lens[i]);
        if !current.is_empty() && (current.len() + 1) * new_max > batch_target_units {
            batches.push(std::mem::take(&mut current));
            current_max = 0;
        }
        current_max = current_max.max(target_lens[i]);
        current.push(i);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_rule_with_pad_accounting() {
        // budget 10, three targets of length 4: [4,4] fits (8 <= 10), the
        // third would pad the batch to 12
        let batches = make_batches(&[4, 4, 4], 10).unwrap();
        assert_eq!(batches, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn everything_fits_in_one_batch() {
        let batches = make_batches(&[2, 3, 4], 100).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 3);
    }

    #[test]
    fn padding_counts_against_budget() {
        // sorted: 1,1,9. [1,1] costs 2; adding 9 would cost 3·9=27 > 20
        let batches = make_batches(&[9, 1, 1], 20).unwrap();
        assert_eq!(batches, vec![vec![1, 2], vec![0]]);
    }

    #[test]
    fn partition_preserves_every_example_once() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let lens: Vec<usize> = (0..50).map(|_| rng.random_range(1..12)).collect();
        let batches = make_batches(&lens, 30).unwrap();
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_example_rejected_with_index() {
        let err = make_batches(&[3, 50, 2], 10).unwrap_err().to_string();
        assert!(err.contains("example 1"), "{err}");
    }
}
