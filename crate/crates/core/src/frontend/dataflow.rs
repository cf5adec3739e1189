//! Dataflow graph construction. Every statement is split into primitive
//! operations writing temporaries `t0, t1, ...`; the last one of a statement
//! writes the statement's target.

use std::collections::HashMap;
use std::fmt;

use super::ast::{DeclaredType, Expr, KernelSpec, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataId(pub usize);

/// Operation number, dense from 1 in statement order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub usize);

impl OpId {
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataRole {
    Input,
    Output,
    Temporary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataNode {
    pub id: DataId,
    pub name: String,
    pub role: DataRole,
    /// `None` for temporaries until type inference.
    pub declared: Option<DeclaredType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operand {
    pub data: DataId,
    pub transposed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Subtract,
    /// `operands[0] * operands[1]` where `operands[1]` is a scalar.
    Scale,
    /// Matrix-vector, vector-matrix, dot, outer or scalar-scalar product.
    Multiply,
    Copy,
}

impl OpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Add => "+",
            OpKind::Subtract => "-",
            OpKind::Scale | OpKind::Multiply => "*",
            OpKind::Copy => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpNode {
    pub id: OpId,
    pub kind: OpKind,
    pub operands: Vec<Operand>,
    pub result: DataId,
    /// Index of the statement this op came from.
    pub statement: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataflowGraph {
    pub spec: KernelSpec,
    pub data: Vec<DataNode>,
    pub ops: Vec<OpNode>,
}

impl DataflowGraph {
    pub fn op(&self, id: OpId) -> &OpNode {
        &self.ops[id.index()]
    }

    pub fn data_node(&self, id: DataId) -> &DataNode {
        &self.data[id.0]
    }

    pub fn data_by_name(&self, name: &str) -> Option<DataId> {
        self.data.iter().find(|d| d.name == name).map(|d| d.id)
    }

    pub fn op_ids(&self) -> impl Iterator<Item = OpId> + '_ {
        self.ops.iter().map(|o| o.id)
    }

    pub fn producer(&self, data: DataId) -> Option<OpId> {
        self.ops.iter().find(|o| o.result == data).map(|o| o.id)
    }

    pub fn consumers(&self, data: DataId) -> Vec<OpId> {
        self.ops
            .iter()
            .filter(|o| o.operands.iter().any(|x| x.data == data))
            .map(|o| o.id)
            .collect()
    }

    /// Data nodes read or written by an op, without duplicates.
    pub fn touched(&self, op: OpId) -> Vec<DataId> {
        let node = self.op(op);
        let mut out: Vec<DataId> = Vec::new();
        for d in node.operands.iter().map(|x| x.data).chain([node.result]) {
            if !out.contains(&d) {
                out.push(d);
            }
        }
        out
    }

    /// Producer-to-consumer op edges, sorted.
    pub fn op_edges(&self) -> Vec<(OpId, OpId)> {
        let mut edges = Vec::new();
        for c in &self.ops {
            for x in &c.operands {
                if let Some(p) = self.producer(x.data) {
                    if !edges.contains(&(p, c.id)) {
                        edges.push((p, c.id));
                    }
                }
            }
        }
        edges.sort();
        edges
    }

    /// Data-to-op and op-to-op edges as `(from, to)` names, as drawn in a
    /// dataflow diagram: an operand produced by an earlier op is drawn from
    /// that op.
    pub fn edge_labels(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for c in &self.ops {
            for x in &c.operands {
                let from = match self.producer(x.data) {
                    Some(p) => p.to_string(),
                    None => self.data_node(x.data).name.clone(),
                };
                let edge = (from, c.id.to_string());
                if !out.contains(&edge) {
                    out.push(edge);
                }
            }
        }
        out
    }

    /// `reach[a][b]` is true when a dataflow path leads from op `a` to op `b`.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.ops.len();
        let mut reach = vec![vec![false; n]; n];
        for (p, c) in self.op_edges() {
            reach[p.index()][c.index()] = true;
        }
        for k in 0..n {
            for a in 0..n {
                if reach[a][k] {
                    for b in 0..n {
                        if reach[k][b] {
                            reach[a][b] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    pub fn describe_op(&self, op: OpId) -> String {
        let node = self.op(op);
        let show = |x: &Operand| {
            let name = &self.data_node(x.data).name;
            if x.transposed {
                format!("{name}'")
            } else {
                name.clone()
            }
        };
        let result = &self.data_node(node.result).name;
        match node.kind {
            OpKind::Copy => format!("{result} = {}", show(&node.operands[0])),
            k => format!(
                "{result} = {} {} {}",
                show(&node.operands[0]),
                k.symbol(),
                show(&node.operands[1])
            ),
        }
    }
}

/// Coarse shape used only to classify product factors: `true` marks a
/// non-unit extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shape {
    rows: bool,
    cols: bool,
}

impl Shape {
    const SCALAR: Shape = Shape { rows: false, cols: false };

    fn of(ty: DeclaredType) -> Shape {
        match ty {
            DeclaredType::Scalar => Shape::SCALAR,
            DeclaredType::Vector(Orientation::Column) => Shape { rows: true, cols: false },
            DeclaredType::Vector(Orientation::Row) => Shape { rows: false, cols: true },
            DeclaredType::Matrix(_) => Shape { rows: true, cols: true },
        }
    }

    fn transposed(self, t: bool) -> Shape {
        if t {
            Shape { rows: self.cols, cols: self.rows }
        } else {
            self
        }
    }

    fn is_scalar(self) -> bool {
        self == Shape::SCALAR
    }
}

struct Builder<'a> {
    spec: &'a KernelSpec,
    data: Vec<DataNode>,
    shapes: Vec<Shape>,
    names: HashMap<String, DataId>,
    ops: Vec<OpNode>,
    temps: usize,
    statement: usize,
}

impl Builder<'_> {
    fn shape(&self, x: Operand) -> Shape {
        self.shapes[x.data.0].transposed(x.transposed)
    }

    fn fresh(&mut self, shape: Shape) -> DataId {
        let mut name = format!("t{}", self.temps);
        self.temps += 1;
        while self.names.contains_key(&name) || self.spec.decl(&name).is_some() {
            name = format!("t{}", self.temps);
            self.temps += 1;
        }
        let id = DataId(self.data.len());
        self.data.push(DataNode { id, name: name.clone(), role: DataRole::Temporary, declared: None });
        self.shapes.push(shape);
        self.names.insert(name, id);
        id
    }

    fn emit(&mut self, kind: OpKind, operands: Vec<Operand>, shape: Shape, dest: Option<DataId>) -> Operand {
        let result = match dest {
            Some(d) => {
                self.shapes[d.0] = shape;
                d
            }
            None => self.fresh(shape),
        };
        let id = OpId(self.ops.len() + 1);
        self.ops.push(OpNode { id, kind, operands, result, statement: self.statement });
        Operand { data: result, transposed: false }
    }

    fn product_shape(a: Shape, b: Shape) -> Shape {
        if a.is_scalar() {
            b
        } else if b.is_scalar() {
            a
        } else {
            Shape { rows: a.rows, cols: b.cols }
        }
    }

    fn lower(&mut self, expr: &Expr, dest: Option<DataId>) -> Operand {
        match expr {
            Expr::Var(name) => {
                let x = Operand { data: self.names[name], transposed: false };
                match dest {
                    Some(_) => self.emit(OpKind::Copy, vec![x], self.shape(x), dest),
                    None => x,
                }
            }
            Expr::Transpose(inner) => {
                let mut x = self.lower(inner, None);
                x.transposed = !x.transposed;
                match dest {
                    Some(_) => self.emit(OpKind::Copy, vec![x], self.shape(x), dest),
                    None => x,
                }
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let kind = if matches!(expr, Expr::Add(..)) { OpKind::Add } else { OpKind::Subtract };
                let x = self.lower(a, None);
                let y = self.lower(b, None);
                let shape = self.shape(x);
                self.emit(kind, vec![x, y], shape, dest)
            }
            Expr::Mul(..) => self.lower_product(expr, dest),
        }
    }

    /// Flattens the left spine of a product chain, multiplies the
    /// non-scalar factors left to right and applies the scalar factors last.
    fn lower_product(&mut self, expr: &Expr, dest: Option<DataId>) -> Operand {
        let mut factors = Vec::new();
        let mut node = expr;
        while let Expr::Mul(l, r) = node {
            factors.push(r.as_ref());
            node = l;
        }
        factors.push(node);
        factors.reverse();

        let lowered: Vec<Operand> = factors.into_iter().map(|f| self.lower(f, None)).collect();
        let (scalars, tensors): (Vec<Operand>, Vec<Operand>) =
            lowered.into_iter().partition(|x| self.shape(*x).is_scalar());

        let scalar = self.chain(OpKind::Multiply, &scalars, if tensors.is_empty() { dest } else { None });
        if tensors.is_empty() {
            return scalar.expect("product has at least one factor");
        }
        match scalar {
            None => self.chain(OpKind::Multiply, &tensors, dest).expect("non-empty"),
            Some(s) => {
                let t = self.chain(OpKind::Multiply, &tensors, None).expect("non-empty");
                let shape = self.shape(t);
                self.emit(OpKind::Scale, vec![t, s], shape, dest)
            }
        }
    }

    /// Left-associative chain of binary ops; the final op writes `dest`.
    fn chain(&mut self, kind: OpKind, items: &[Operand], dest: Option<DataId>) -> Option<Operand> {
        let (&first, rest) = items.split_first()?;
        if rest.is_empty() {
            return Some(match dest {
                Some(_) => self.emit(OpKind::Copy, vec![first], self.shape(first), dest),
                None => first,
            });
        }
        let mut acc = first;
        for (n, &x) in rest.iter().enumerate() {
            let shape = Self::product_shape(self.shape(acc), self.shape(x));
            let target = if n + 1 == rest.len() { dest } else { None };
            acc = self.emit(kind, vec![acc, x], shape, target);
        }
        Some(acc)
    }
}

/// Builds the dataflow graph of a parsed kernel.
pub fn build_dataflow(spec: &KernelSpec) -> DataflowGraph {
    let mut b = Builder {
        spec,
        data: Vec::new(),
        shapes: Vec::new(),
        names: HashMap::new(),
        ops: Vec::new(),
        temps: 0,
        statement: 0,
    };
    for (decl, role) in spec
        .inputs
        .iter()
        .map(|d| (d, DataRole::Input))
        .chain(spec.outputs.iter().map(|d| (d, DataRole::Output)))
    {
        let id = DataId(b.data.len());
        b.data.push(DataNode { id, name: decl.name.clone(), role, declared: Some(decl.ty) });
        b.shapes.push(Shape::of(decl.ty));
        b.names.insert(decl.name.clone(), id);
    }
    for (n, stmt) in spec.statements.iter().enumerate() {
        b.statement = n;
        let dest = b.names[&stmt.target];
        b.lower(&stmt.expr, Some(dest));
    }
    DataflowGraph { spec: spec.clone(), data: b.data, ops: b.ops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel;

    fn listing(src: &str) -> Vec<String> {
        let g = build_dataflow(&parse_kernel(src).unwrap());
        g.op_ids().map(|o| g.describe_op(o)).collect()
    }

    #[test]
    fn batax_listing() {
        let src = "BATAX in: x : vector(column), beta : scalar, A : matrix(row) \
                   out: y : vector(column) { y = beta * A' * (A * x) }";
        assert_eq!(listing(src), ["t0 = A * x", "t1 = A' * t0", "y = t1 * beta"]);
        let g = build_dataflow(&parse_kernel(src).unwrap());
        let edges = g.edge_labels();
        let want = [("A", "1"), ("x", "1"), ("A", "2"), ("1", "2"), ("2", "3"), ("beta", "3")];
        assert_eq!(edges.len(), want.len());
        for (a, b) in want {
            assert!(edges.contains(&(a.to_string(), b.to_string())), "{a}->{b}");
        }
    }

    #[test]
    fn copy_kernel() {
        let src = "T in: a : scalar out: b : scalar { b = a }";
        assert_eq!(listing(src), ["b = a"]);
    }

    #[test]
    fn scalars_combine_before_scaling() {
        let src = "K in: a : scalar, b : scalar, x : vector(column) out: y : vector(column) { y = a * x * b }";
        assert_eq!(listing(src), ["t0 = a * b", "y = x * t0"]);
    }

    #[test]
    fn axpydot_listing() {
        let src = "AXPYDOT in: w : vector(column), v : vector(column), u : vector(column), alpha : scalar \
                   out: z : vector(column), beta : scalar { z = w - alpha * v  beta = z' * u }";
        assert_eq!(listing(src), ["t0 = v * alpha", "z = w - t0", "beta = z' * u"]);
    }
}
