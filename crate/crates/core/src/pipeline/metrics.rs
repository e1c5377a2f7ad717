use std::fmt::Write as _;

/// Classification quality on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub acc: f64,
    pub macro_f1: f64,
    /// Binary rank AUC, or the macro one-vs-rest mean for more classes;
    /// `None` when the split holds a single class.
    pub auc: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn class_counts(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    /// `key=value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "acc={}", self.acc);
        let _ = writeln!(s, "macro_f1={}", self.macro_f1);
        match self.auc {
            Some(a) => {
                let _ = writeln!(s, "auc={a}");
            }
            None => {
                let _ = writeln!(s, "auc=undefined");
            }
        }
        for (c, n) in self.class_counts().iter().enumerate() {
            let _ = writeln!(s, "count_{c}={n}");
        }
        s
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mann–Whitney AUC with midranks for ties. `None` without both classes.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Metrics from per-sample class scores (probabilities or logits).
pub fn compute_metrics(scores: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Metrics {
    assert_eq!(scores.len(), labels.len());
    let n = labels.len();
    let mut confusion = vec![vec![0; n_classes]; n_classes];
    for (s, &y) in scores.iter().zip(labels) {
        confusion[y][argmax(s)] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let acc = if n == 0 {
        0.0
    } else {
        correct as f64 / n as f64
    };
    let f1: Vec<f64> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let denom = (predicted + actual) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    let macro_f1 = f1.iter().sum::<f64>() / n_classes as f64;
    let auc = if n_classes == 2 {
        let s: Vec<f64> = scores.iter().map(|s| s[1] - s[0]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        binary_auc(&s, &pos)
    } else {
        let per_class: Vec<f64> = (0..n_classes)
            .filter_map(|c| {
                let s: Vec<f64> = scores.iter().map(|s| s[c]).collect();
                let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                binary_auc(&s, &pos)
            })
            .collect();
        if per_class.is_empty() {
            None
        } else {
            Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
        }
    };
    Metrics {
        n,
        acc,
        macro_f1,
        auc,
        confusion,
    }
}
