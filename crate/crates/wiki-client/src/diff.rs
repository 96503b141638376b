use serde::{Deserialize, Serialize};

/// Excerpts never exceed this many bytes, marker included.
pub const EXCERPT_LIMIT: usize = 4096;
pub const TRUNCATION_MARKER: &str = "\n[truncated]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Equal,
    Insert,
    Delete,
}

/// A run of whole lines. `text` is the lines joined with `\n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffOp {
    pub op: OpKind,
    pub text: String,
}

/// Caps `text` at [`EXCERPT_LIMIT`] bytes on a char boundary.
pub fn excerpt(text: &str) -> String {
    if text.len() <= EXCERPT_LIMIT {
        return text.to_owned();
    }
    let mut end = EXCERPT_LIMIT - TRUNCATION_MARKER.len();
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}{TRUNCATION_MARKER}", &text[..end])
}

fn push(ops: &mut Vec<DiffOp>, op: OpKind, line: &str) {
    match ops.last_mut() {
        Some(last) if last.op == op => {
            last.text.push('\n');
            last.text.push_str(line);
        }
        _ => ops.push(DiffOp { op, text: line.to_owned() }),
    }
}

/// Line-based LCS diff. Within a changed region deletions come first.
pub fn compute_diff(before: &str, after: &str) -> Vec<DiffOp> {
    let a: Vec<&str> = before.split('\n').collect();
    let b: Vec<&str> = after.split('\n').collect();

    // Common prefix and suffix belong to every LCS; only the middle needs the table.
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..].iter().rev().zip(b[prefix..].iter().rev()).take_while(|(x, y)| x == y).count();
    let (am, bm) = (&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);

    let (n, m) = (am.len(), bm.len());
    let width = m + 1;
    // lcs[i * width + j] = LCS length of am[i..] and bm[j..]
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if am[i] == bm[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut ops = Vec::new();
    for line in &a[..prefix] {
        push(&mut ops, OpKind::Equal, line);
    }
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && am[i] == bm[j] {
            push(&mut ops, OpKind::Equal, am[i]);
            i += 1;
            j += 1;
        } else if i < n && (j == m || lcs[(i + 1) * width + j] >= lcs[i * width + j + 1]) {
            push(&mut ops, OpKind::Delete, am[i]);
            i += 1;
        } else {
            push(&mut ops, OpKind::Insert, bm[j]);
            j += 1;
        }
    }
    for line in &a[a.len() - suffix..] {
        push(&mut ops, OpKind::Equal, line);
    }
    ops
}

/// Applies `ops` to `before`; `None` when they do not describe `before`.
pub fn apply_diff(before: &str, ops: &[DiffOp]) -> Option<String> {
    let mut source = before.split('\n');
    let mut out: Vec<&str> = Vec::new();
    for op in ops {
        for line in op.text.split('\n') {
            match op.op {
                OpKind::Equal => {
                    if source.next()? != line {
                        return None;
                    }
                    out.push(line);
                }
                OpKind::Delete => {
                    if source.next()? != line {
                        return None;
                    }
                }
                OpKind::Insert => out.push(line),
            }
        }
    }
    source.next().is_none().then(|| out.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(op: OpKind, text: &str) -> DiffOp {
        DiffOp { op, text: text.into() }
    }

    #[test]
    fn identical_is_one_equal_op() {
        assert_eq!(compute_diff("a\nb", "a\nb"), vec![op(OpKind::Equal, "a\nb")]);
    }

    #[test]
    fn single_line_swap() {
        assert_eq!(
            compute_diff("a\nb", "a\nc"),
            vec![op(OpKind::Equal, "a"), op(OpKind::Delete, "b"), op(OpKind::Insert, "c")]
        );
    }

    #[test]
    fn block_replacement_groups_deletes_first() {
        assert_eq!(
            compute_diff("x\na\nb\ny", "x\nc\nd\ny"),
            vec![op(OpKind::Equal, "x"), op(OpKind::Delete, "a\nb"), op(OpKind::Insert, "c\nd"), op(OpKind::Equal, "y")]
        );
    }

    #[test]
    fn creation_from_empty() {
        let ops = compute_diff("", "hello");
        assert_eq!(apply_diff("", &ops).unwrap(), "hello");
    }

    #[test]
    fn apply_rejects_foreign_ops() {
        let ops = compute_diff("a\nb", "a\nc");
        assert_eq!(apply_diff("a\nz", &ops), None);
        assert_eq!(apply_diff("a\nb\nextra", &ops), None);
    }

    #[test]
    fn excerpt_caps_size_on_char_boundary() {
        let long = "é".repeat(3000);
        let ex = excerpt(&long);
        assert!(ex.len() <= EXCERPT_LIMIT);
        assert!(ex.ends_with(TRUNCATION_MARKER));
        assert_eq!(excerpt("short"), "short");
    }
}
