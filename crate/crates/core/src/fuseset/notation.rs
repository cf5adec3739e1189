//! Textual fuse-set notation.
//!
//! `{_i ...}` is a loop over `i`, `{_{p(i)} ...}` a partition cutting `i`,
//! bare numbers are op leaves. Roots are concatenated. A key suffix
//! `@4,2` lists partition thread counts in tree order.

use thiserror::Error;

use super::tree::{Node, Organism};
use crate::frontend::{DimId, KernelGraph, OpId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotationError {
    #[error("unbalanced braces at offset {0}")]
    BracketMismatch(usize),
    #[error("unexpected `{found}` at offset {at}")]
    Unexpected { found: char, at: usize },
    #[error("unknown op {0}")]
    UnknownOp(usize),
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{axis}` is not in the loop nest of op {op}")]
    AxisNotInNest { axis: String, op: usize },
    #[error("cannot infer the axis of a brace around op {0}")]
    Uninferable(usize),
    #[error("{given} thread counts for {partitions} partitions")]
    ThreadCount { given: usize, partitions: usize },
}

fn label_text(graph: &KernelGraph, axis: DimId) -> String {
    let l = graph.label(axis);
    if l.chars().count() == 1 {
        l.to_string()
    } else {
        format!("{{{l}}}")
    }
}

fn write_node(node: &Node, graph: &KernelGraph, out: &mut String) {
    match node {
        Node::Op(o) => out.push_str(&o.to_string()),
        Node::Loop { axis, children } => {
            out.push_str("{_");
            out.push_str(&label_text(graph, *axis));
            write_children(children, graph, out);
            out.push('}');
        }
        Node::Partition { axis, children, .. } => {
            out.push_str("{_{p(");
            out.push_str(graph.label(*axis));
            out.push_str(")}");
            write_children(children, graph, out);
            out.push('}');
        }
    }
}

fn write_children(children: &[Node], graph: &KernelGraph, out: &mut String) {
    for c in children {
        if let Node::Op(o) = c {
            out.push(' ');
            out.push_str(&o.to_string());
        } else {
            write_node(c, graph, out);
        }
    }
}

/// Structure only, without thread counts.
pub fn format_notation(org: &Organism, graph: &KernelGraph) -> String {
    let mut out = String::new();
    let mut prev_bare = false;
    for (n, r) in org.roots.iter().enumerate() {
        let bare = matches!(r, Node::Op(_));
        if n > 0 && (bare || prev_bare) {
            out.push(' ');
        }
        write_node(r, graph, &mut out);
        prev_bare = bare;
    }
    out
}

/// Notation plus thread counts; the identity used for caching and logs.
pub fn organism_key(org: &Organism, graph: &KernelGraph) -> String {
    let mut key = format_notation(org, graph);
    let threads = org.thread_counts();
    if !threads.is_empty() {
        let list: Vec<String> = threads.iter().map(u32::to_string).collect();
        key.push_str(" @");
        key.push_str(&list.join(","));
    }
    key
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Annot {
    Bare,
    Loop(DimId),
    Partition(DimId),
}

#[derive(Debug, Clone)]
enum Item {
    Op(OpId),
    Brace(Annot, Vec<Item>),
}

struct Reader<'a> {
    chars: Vec<char>,
    at: usize,
    graph: &'a KernelGraph,
    labels: Vec<(String, DimId)>,
}

impl Reader<'_> {
    fn skip_ws(&mut self) {
        while self.chars.get(self.at).is_some_and(|c| c.is_whitespace()) {
            self.at += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.at).copied()
    }

    fn unexpected<T>(&self) -> Result<T, NotationError> {
        match self.chars.get(self.at) {
            Some(&found) => Err(NotationError::Unexpected { found, at: self.at }),
            None => Err(NotationError::BracketMismatch(self.at)),
        }
    }

    fn number(&mut self) -> usize {
        let start = self.at;
        while self.chars.get(self.at).is_some_and(|c| c.is_ascii_digit()) {
            self.at += 1;
        }
        self.chars[start..self.at].iter().collect::<String>().parse().expect("digits")
    }

    fn op(&mut self) -> Result<OpId, NotationError> {
        let n = self.number();
        if n == 0 || n > self.graph.op_count() {
            return Err(NotationError::UnknownOp(n));
        }
        Ok(OpId(n))
    }

    /// Longest known label starting at the cursor.
    fn label(&mut self) -> Result<DimId, NotationError> {
        let rest: String = self.chars[self.at..].iter().collect();
        let hit = self.labels.iter().find(|(l, _)| rest.starts_with(l.as_str())).cloned();
        match hit {
            Some((l, d)) => {
                self.at += l.chars().count();
                Ok(d)
            }
            None => {
                let word: String = rest.chars().take_while(|c| c.is_alphanumeric()).collect();
                Err(NotationError::UnknownAxis(word))
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), NotationError> {
        if self.peek() == Some(want) {
            self.at += 1;
            Ok(())
        } else {
            self.unexpected()
        }
    }

    fn annotation(&mut self) -> Result<Annot, NotationError> {
        if self.peek() != Some('_') {
            return Ok(Annot::Bare);
        }
        self.at += 1;
        if self.peek() != Some('{') {
            return Ok(Annot::Loop(self.label()?));
        }
        self.at += 1;
        self.skip_ws();
        let rest: String = self.chars[self.at..].iter().take(2).collect();
        let annot = if rest == "p(" && !self.labels.iter().any(|(l, _)| l.starts_with("p(")) {
            self.at += 2;
            self.skip_ws();
            let d = self.label()?;
            self.expect(')')?;
            Annot::Partition(d)
        } else {
            Annot::Loop(self.label()?)
        };
        self.expect('}')?;
        Ok(annot)
    }

    fn items(&mut self, top: bool) -> Result<Vec<Item>, NotationError> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some('{') => {
                    self.at += 1;
                    let annot = self.annotation()?;
                    let children = self.items(false)?;
                    if self.peek() != Some('}') {
                        return Err(NotationError::BracketMismatch(self.at));
                    }
                    self.at += 1;
                    items.push(Item::Brace(annot, children));
                }
                Some(c) if c.is_ascii_digit() => items.push(Item::Op(self.op()?)),
                Some('}') if top => return Err(NotationError::BracketMismatch(self.at)),
                Some('}') | Some('@') | None => return Ok(items),
                Some(_) => return self.unexpected(),
            }
        }
    }

    fn threads(&mut self) -> Result<Option<Vec<u32>>, NotationError> {
        if self.peek() != Some('@') {
            return match self.peek() {
                None => Ok(None),
                Some(_) => self.unexpected(),
            };
        }
        self.at += 1;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_digit() => out.push(self.number() as u32),
                _ => return self.unexpected(),
            }
            match self.peek() {
                Some(',') => self.at += 1,
                None => return Ok(Some(out)),
                Some(_) => return self.unexpected(),
            }
        }
    }
}

fn item_ops(item: &Item, out: &mut Vec<OpId>) {
    match item {
        Item::Op(o) => out.push(*o),
        Item::Brace(_, cs) => cs.iter().for_each(|c| item_ops(c, out)),
    }
}

/// Loop-level braces between `item` (inclusive) and each op leaf.
fn leaf_depths(item: &Item, depth: usize, out: &mut Vec<(OpId, usize)>) {
    match item {
        Item::Op(o) => out.push((*o, depth)),
        Item::Brace(a, cs) => {
            let d = depth + usize::from(!matches!(a, Annot::Partition(_)));
            cs.iter().for_each(|c| leaf_depths(c, d, out));
        }
    }
}

/// Drops bare single-child braces that leave every op below with more
/// levels than its loop nest has.
fn elide(item: Item, graph: &KernelGraph) -> Item {
    match item {
        Item::Op(o) => Item::Op(o),
        Item::Brace(annot, mut children) => {
            if annot == Annot::Bare && children.len() == 1 && matches!(children[0], Item::Brace(..)) {
                let inner = Item::Brace(annot, children.clone());
                let mut depths = Vec::new();
                leaf_depths(&inner, 0, &mut depths);
                if !depths.is_empty() && depths.iter().all(|&(o, d)| d > graph.nest(o).depth()) {
                    return elide(children.pop().unwrap(), graph);
                }
            }
            Item::Brace(annot, children.into_iter().map(|c| elide(c, graph)).collect())
        }
    }
}

fn build(item: &Item, graph: &KernelGraph) -> Result<Node, NotationError> {
    match item {
        Item::Op(o) => Ok(Node::Op(*o)),
        Item::Brace(annot, cs) => {
            let mut ops = Vec::new();
            item_ops(item, &mut ops);
            let children = cs.iter().map(|c| build(c, graph)).collect::<Result<Vec<_>, _>>()?;
            let check = |axis: DimId| {
                for &o in &ops {
                    if !graph.nest(o).contains(axis) {
                        return Err(NotationError::AxisNotInNest { axis: graph.label(axis).to_string(), op: o.0 });
                    }
                }
                Ok(axis)
            };
            Ok(match *annot {
                Annot::Loop(axis) => Node::Loop { axis: check(axis)?, children },
                Annot::Partition(axis) => Node::Partition { axis: check(axis)?, threads: 0, children },
                Annot::Bare => {
                    let mut depths = Vec::new();
                    leaf_depths(item, 0, &mut depths);
                    let &(first, h) = depths.first().ok_or(NotationError::Uninferable(0))?;
                    let nest = graph.nest(first);
                    if h > nest.depth() {
                        return Err(NotationError::Uninferable(first.0));
                    }
                    Node::Loop { axis: nest.axes[nest.depth() - h].dim, children }
                }
            })
        }
    }
}

/// Parses notation as written (sibling order is kept). Partitions without an
/// `@` suffix get `default_threads`.
pub fn parse_notation(text: &str, graph: &KernelGraph, default_threads: u32) -> Result<Organism, NotationError> {
    let mut labels: Vec<(String, DimId)> =
        graph.dims.iter().enumerate().map(|(n, d)| (d.label.clone(), DimId(n))).collect();
    labels.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    let mut r = Reader { chars: text.chars().collect(), at: 0, graph, labels };
    let items = r.items(true)?;
    let threads = r.threads()?;
    let roots = items
        .into_iter()
        .map(|i| build(&elide(i, graph), graph))
        .collect::<Result<Vec<_>, _>>()?;
    let mut org = Organism::new(roots);
    let partitions = org.partition_count();
    match threads {
        Some(t) if t.len() != partitions => {
            return Err(NotationError::ThreadCount { given: t.len(), partitions });
        }
        Some(t) => org.set_threads(&t),
        None => org.set_all_threads(default_threads),
    }
    Ok(org)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::fuseset::tree::{canonicalize, initial_forest};

    #[test]
    fn unfused_batax_short_form() {
        let g = corpus::load("batax").unwrap();
        let org = parse_notation("{{1}} {{2}} {{3}}", &g, 1).unwrap();
        assert_eq!(org, initial_forest(&g));
        assert_eq!(format_notation(&org, &g), "{_i{_j 1}}{_i{_j 2}}{_j 3}");
    }

    #[test]
    fn max_fuse_form_round_trips() {
        let g = corpus::load("batax").unwrap();
        let text = "{_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}";
        let org = parse_notation(text, &g, 8).unwrap();
        assert_eq!(format_notation(&org, &g), text);
        assert_eq!(organism_key(&org, &g), format!("{text} @8,8"));
        let back = parse_notation(&organism_key(&org, &g), &g, 1).unwrap();
        assert_eq!(back, org);
    }

    #[test]
    fn compact_subscripts() {
        let g = corpus::load("batax").unwrap();
        let org = parse_notation("{_{p(i)}{_i{_j1}}}", &g, 2);
        assert!(org.is_ok(), "{org:?}");
        let b = parse_notation("{{1} {2}} {{3}}", &g, 1).unwrap();
        assert_eq!(format_notation(&canonicalize(&b, &g), &g), "{_i{_j 1}{_j 2}}{_j 3}");
    }

    #[test]
    fn errors() {
        let g = corpus::load("batax").unwrap();
        assert!(matches!(parse_notation("{_i{_j 1}", &g, 1), Err(NotationError::BracketMismatch(_))));
        assert!(matches!(parse_notation("{_j 1}}", &g, 1), Err(NotationError::BracketMismatch(_))));
        assert_eq!(parse_notation("{_j 7}", &g, 1), Err(NotationError::UnknownOp(7)));
        assert_eq!(
            parse_notation("{_i 3}", &g, 1),
            Err(NotationError::AxisNotInNest { axis: "i".into(), op: 3 })
        );
        assert!(matches!(parse_notation("{_q 3}", &g, 1), Err(NotationError::UnknownAxis(_))));
        assert!(matches!(
            parse_notation("{_{p(j)}{_j 3}} @2,3", &g, 1),
            Err(NotationError::ThreadCount { given: 2, partitions: 1 })
        ));
    }
}
