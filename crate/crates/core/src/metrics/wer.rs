//! Word/character error rates from a minimal edit-distance alignment.

/// Substitution/insertion/deletion counts of a minimal alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn add(&mut self, other: EditCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
    }
}

/// Levenshtein alignment with unit costs. Insertions are hypothesis tokens
/// with no reference counterpart, deletions are missed reference tokens.
/// Cost ties resolve substitution first, then insertion, then deletion.
pub fn edit_distance_alignment<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let m = reference.len();
    let n = hypothesis.len();
    let mut cost = vec![0u32; (m + 1) * (n + 1)];
    // move taken to reach each cell: 0 match, 1 sub, 2 ins, 3 del
    let mut step = vec![0u8; (m + 1) * (n + 1)];
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    for j in 1..=n {
        cost[idx(0, j)] = j as u32;
        step[idx(0, j)] = 2;
    }
    for i in 1..=m {
        cost[idx(i, 0)] = i as u32;
        step[idx(i, 0)] = 3;
    }
    for i in 1..=m {
        for j in 1..=n {
            if reference[i - 1] == hypothesis[j - 1] {
                cost[idx(i, j)] = cost[idx(i - 1, j - 1)];
                step[idx(i, j)] = 0;
                continue;
            }
            let sub = cost[idx(i - 1, j - 1)] + 1;
            let ins = cost[idx(i, j - 1)] + 1;
            let del = cost[idx(i - 1, j)] + 1;
            let best = sub.min(ins).min(del);
            cost[idx(i, j)] = best;
            step[idx(i, j)] = if best == sub {
                1
            } else if best == ins {
                2
            } else {
                3
            };
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        match step[idx(i, j)] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => {
                counts.substitutions += 1;
                i -= 1;
                j -= 1;
            }
            2 => {
                counts.insertions += 1;
                j -= 1;
            }
            _ => {
                counts.deletions += 1;
                i -= 1;
            }
        }
    }
    counts
}

/// 100·(S+I+D)/reference_length. An empty reference scores 0 against an
/// empty hypothesis and 100 otherwise.
pub fn error_rate(counts: EditCounts, reference_len: usize) -> f64 {
    if reference_len == 0 {
        return if counts.total() == 0 { 0.0 } else { 100.0 };
    }
    100.0 * counts.total() as f64 / reference_len as f64
}

/// Word error rate of one sentence pair over whitespace tokens.
pub fn sentence_wer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    error_rate(edit_distance_alignment(&r, &h), r.len())
}

/// Character error rate; spaces count as characters.
pub fn sentence_cer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    error_rate(edit_distance_alignment(&r, &h), r.len())
}
