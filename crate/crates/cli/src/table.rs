use dialact::corpus::Dataset;

/// Whole-number percentage, or `<1%` for a nonzero share that rounds to 0.
fn percent(count: usize, total: usize) -> String {
    let p = (100.0 * count as f64 / total as f64).round();
    if count > 0 && p == 0.0 {
        "<1%".to_string()
    } else {
        format!("{p}%")
    }
}

/// Labels by descending frequency (label order on ties), filled down the
/// left column pair first, then the right.
pub fn distribution_table(dataset: &Dataset) -> String {
    let counts = dataset.label_counts();
    let total = dataset.len().max(1);
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let cells: Vec<(String, String)> = order
        .iter()
        .map(|&i| (dataset.labels.tag(i).to_string(), percent(counts[i], total)))
        .collect();
    let rows = cells.len().div_ceil(2);
    let (left, right) = cells.split_at(rows);

    let header = ("Label", "Occurrence");
    let label_w = cells
        .iter()
        .map(|c| c.0.len())
        .chain([header.0.len()])
        .max()
        .unwrap_or(0);
    let occ_w = header.1.len();
    let pair = |l: &str, o: &str| format!("{l:<label_w$}  {o:<occ_w$}");
    let mut out = String::new();
    let line = |a: String, b: Option<String>| match b {
        Some(b) => format!("{a}    {b}").trim_end().to_string() + "\n",
        None => a.trim_end().to_string() + "\n",
    };
    out.push_str(&line(
        pair(header.0, header.1),
        Some(pair(header.0, header.1)),
    ));
    for (r, (l, o)) in left.iter().enumerate() {
        let b = right.get(r).map(|(l, o)| pair(l, o));
        out.push_str(&line(pair(l, o), b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dialact::corpus::{LabelSet, Turn};

    fn dataset(counts: &[(&str, usize)]) -> Dataset {
        let labels = LabelSet::new(counts.iter().map(|c| c.0)).unwrap();
        let mut turns = Vec::new();
        for (tag, n) in counts {
            for _ in 0..*n {
                turns.push(Turn {
                    dialogue_id: format!("d{}", turns.len()),
                    turn_index: 0,
                    speaker: "s".into(),
                    label: tag.to_string(),
                    text_original: String::new(),
                    text_translated: None,
                });
            }
        }
        Dataset::new(labels, turns).unwrap()
    }

    #[test]
    fn two_column_pairs() {
        let d = dataset(&[("B", 30), ("A", 269), ("C", 1), ("D", 700)]);
        let t = distribution_table(&d);
        let expected = "\
Label  Occurrence    Label  Occurrence
D      70%           B      3%
A      27%           C      <1%
";
        assert_eq!(t, expected);
    }

    #[test]
    fn odd_count_leaves_right_cell_empty() {
        let d = dataset(&[("X", 2), ("Y", 1), ("Z", 1)]);
        let table = distribution_table(&d);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "Y      25%");
    }
}
