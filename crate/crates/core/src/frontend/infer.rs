//! Type inference: dimension unification, container types for temporaries
//! and per-op loop nests with reduction and contiguity flags.

use std::fmt;

use super::ast::{DeclaredType, Orientation};
use super::dataflow::{DataId, DataRole, DataflowGraph, OpId, OpKind, Operand};
use super::types::ContainerType;
use super::FrontendError;

/// Dimension class after unification. Also names a loop axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DimId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimInfo {
    /// Loop label: `i` for matrix rows, `j` for matrix columns, `k` for
    /// vector-only extents, suffixed with a number past the first.
    pub label: String,
    /// Extent parameter name: `M`, `N` or `K`, suffixed likewise.
    pub extent: String,
}

/// Element layout of a matrix in memory; vectors and scalars are trivially
/// laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Storage {
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axis {
    pub dim: DimId,
    pub contiguous: bool,
    pub reduction: bool,
}

/// Loop nest of one operation, outermost axis first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpNest {
    pub axes: Vec<Axis>,
}

impl OpNest {
    pub fn dims(&self) -> Vec<DimId> {
        self.axes.iter().map(|a| a.dim).collect()
    }

    pub fn contains(&self, dim: DimId) -> bool {
        self.axes.iter().any(|a| a.dim == dim)
    }

    pub fn reduction(&self) -> Option<DimId> {
        self.axes.iter().find(|a| a.reduction).map(|a| a.dim)
    }

    pub fn depth(&self) -> usize {
        self.axes.len()
    }
}

/// A typed kernel: the dataflow graph plus everything inferred about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelGraph {
    pub flow: DataflowGraph,
    pub dims: Vec<DimInfo>,
    /// Per data node: row extent, column extent (`None` for unit).
    pub shapes: Vec<(Option<DimId>, Option<DimId>)>,
    pub storage: Vec<Storage>,
    pub types: Vec<ContainerType>,
    pub nests: Vec<OpNest>,
}

impl KernelGraph {
    pub fn name(&self) -> &str {
        &self.flow.spec.name
    }

    pub fn op_count(&self) -> usize {
        self.flow.ops.len()
    }

    pub fn op_ids(&self) -> impl Iterator<Item = OpId> + '_ {
        self.flow.op_ids()
    }

    pub fn nest(&self, op: OpId) -> &OpNest {
        &self.nests[op.index()]
    }

    pub fn label(&self, dim: DimId) -> &str {
        &self.dims[dim.0].label
    }

    pub fn dim_by_label(&self, label: &str) -> Option<DimId> {
        self.dims.iter().position(|d| d.label == label).map(DimId)
    }

    /// Dimensions of a data node in storage order, outermost first.
    pub fn data_dims(&self, data: DataId) -> Vec<DimId> {
        let (r, c) = self.shapes[data.0];
        match (r, c, self.storage[data.0]) {
            (Some(r), Some(c), Storage::RowMajor) => vec![r, c],
            (Some(r), Some(c), Storage::ColumnMajor) => vec![c, r],
            (Some(r), None, _) => vec![r],
            (None, Some(c), _) => vec![c],
            (None, None, _) => vec![],
        }
    }

    pub fn is_temporary(&self, data: DataId) -> bool {
        self.flow.data_node(data).role == DataRole::Temporary
    }

    /// Number of elements of a data node under the given extents.
    pub fn element_count(&self, data: DataId, extents: &[usize]) -> usize {
        self.data_dims(data).iter().map(|d| extents[d.0]).product()
    }
}

impl fmt::Display for KernelGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in self.op_ids() {
            let axes: Vec<String> = self
                .nest(op)
                .axes
                .iter()
                .map(|a| {
                    let mut s = self.label(a.dim).to_string();
                    if a.reduction {
                        s.push('+');
                    }
                    s
                })
                .collect();
            writeln!(f, "{op}: {}  [{}]", self.flow.describe_op(op), axes.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Unit,
    Var(usize),
}

struct Unifier {
    parent: Vec<usize>,
}

impl Unifier {
    fn fresh(&mut self) -> Dim {
        self.parent.push(self.parent.len());
        Dim::Var(self.parent.len() - 1)
    }

    fn find(&mut self, v: usize) -> usize {
        let p = self.parent[v];
        if p == v {
            return v;
        }
        let root = self.find(p);
        self.parent[v] = root;
        root
    }

    fn unify(&mut self, a: Dim, b: Dim) -> bool {
        match (a, b) {
            (Dim::Unit, Dim::Unit) => true,
            (Dim::Var(x), Dim::Var(y)) => {
                let (x, y) = (self.find(x), self.find(y));
                if x != y {
                    self.parent[x.max(y)] = x.min(y);
                }
                true
            }
            _ => false,
        }
    }
}

fn describe(shape: (Dim, Dim)) -> &'static str {
    match shape {
        (Dim::Unit, Dim::Unit) => "scalar",
        (Dim::Var(_), Dim::Unit) => "column vector",
        (Dim::Unit, Dim::Var(_)) => "row vector",
        _ => "matrix",
    }
}

fn storage_of(ty: Option<DeclaredType>) -> Option<Storage> {
    match ty {
        Some(DeclaredType::Matrix(Orientation::Row)) => Some(Storage::RowMajor),
        Some(DeclaredType::Matrix(Orientation::Column)) => Some(Storage::ColumnMajor),
        _ => None,
    }
}

/// Unifies dimensions across the graph, assigns shapes and container types to
/// temporaries and derives every op's loop nest.
pub fn infer_types(flow: DataflowGraph) -> Result<KernelGraph, FrontendError> {
    let mut u = Unifier { parent: Vec::new() };
    let mut shapes: Vec<Option<(Dim, Dim)>> = vec![None; flow.data.len()];
    for d in &flow.data {
        shapes[d.id.0] = d.declared.map(|ty| match ty {
            DeclaredType::Scalar => (Dim::Unit, Dim::Unit),
            DeclaredType::Vector(Orientation::Column) => (u.fresh(), Dim::Unit),
            DeclaredType::Vector(Orientation::Row) => (Dim::Unit, u.fresh()),
            DeclaredType::Matrix(_) => (u.fresh(), u.fresh()),
        });
    }

    let view = |shapes: &[Option<(Dim, Dim)>], x: &Operand| {
        let (r, c) = shapes[x.data.0].expect("operand typed before use");
        if x.transposed {
            (c, r)
        } else {
            (r, c)
        }
    };

    for op in &flow.ops {
        let n = op.id.0;
        let mismatch = |message: String| FrontendError::TypeMismatch { op: n, message };
        let a = view(&shapes, &op.operands[0]);
        let computed = match op.kind {
            OpKind::Copy => a,
            OpKind::Add | OpKind::Subtract => {
                let b = view(&shapes, &op.operands[1]);
                if !(u.unify(a.0, b.0) && u.unify(a.1, b.1)) {
                    return Err(mismatch(format!(
                        "cannot {} a {} and a {}",
                        if op.kind == OpKind::Add { "add" } else { "subtract" },
                        describe(a),
                        describe(b)
                    )));
                }
                a
            }
            OpKind::Scale => {
                let b = view(&shapes, &op.operands[1]);
                if b != (Dim::Unit, Dim::Unit) {
                    return Err(mismatch(format!("scale factor is a {}", describe(b))));
                }
                a
            }
            OpKind::Multiply => {
                let b = view(&shapes, &op.operands[1]);
                if !u.unify(a.1, b.0) {
                    return Err(mismatch(format!("cannot multiply a {} by a {}", describe(a), describe(b))));
                }
                if a.0 != Dim::Unit && a.1 != Dim::Unit && b.1 != Dim::Unit {
                    return Err(FrontendError::UnsupportedProduct {
                        op: n,
                        message: "matrix-matrix products are not supported".into(),
                    });
                }
                (a.0, b.1)
            }
        };
        let slot = &mut shapes[op.result.0];
        match *slot {
            Some(declared) => {
                if !(u.unify(declared.0, computed.0) && u.unify(declared.1, computed.1)) {
                    return Err(mismatch(format!(
                        "`{}` is declared as a {} but assigned a {}",
                        flow.data_node(op.result).name,
                        describe(declared),
                        describe(computed)
                    )));
                }
            }
            None => *slot = Some(computed),
        }
    }

    let resolved: Vec<(Dim, Dim)> = shapes
        .iter()
        .map(|s| {
            let (r, c) = s.expect("every data node is typed");
            let fix = |d: Dim, u: &mut Unifier| match d {
                Dim::Var(v) => Dim::Var(u.find(v)),
                Dim::Unit => Dim::Unit,
            };
            (fix(r, &mut u), fix(c, &mut u))
        })
        .collect();

    for (d, &(r, c)) in flow.data.iter().zip(&resolved) {
        if r != Dim::Unit && r == c {
            return Err(FrontendError::DimensionConflict(format!(
                "rows and columns of `{}` are forced to the same extent",
                d.name
            )));
        }
    }

    // Dimension classes: matrix rows, then matrix columns, then vector-only.
    let mut classes: Vec<(usize, char)> = Vec::new();
    let add = |d: Dim, kind: char, classes: &mut Vec<(usize, char)>| {
        if let Dim::Var(v) = d {
            if !classes.iter().any(|&(c, _)| c == v) {
                classes.push((v, kind));
            }
        }
    };
    for &(r, c) in &resolved {
        if r != Dim::Unit && c != Dim::Unit {
            add(r, 'i', &mut classes);
            add(c, 'j', &mut classes);
        }
    }
    for &(r, c) in &resolved {
        add(r, 'k', &mut classes);
        add(c, 'k', &mut classes);
    }
    let mut seen = [0usize; 3];
    let dims: Vec<DimInfo> = classes
        .iter()
        .map(|&(_, kind)| {
            let slot = match kind {
                'i' => 0,
                'j' => 1,
                _ => 2,
            };
            seen[slot] += 1;
            let extent = ["M", "N", "K"][slot];
            let suffix = if seen[slot] == 1 { String::new() } else { seen[slot].to_string() };
            DimInfo { label: format!("{kind}{suffix}"), extent: format!("{extent}{suffix}") }
        })
        .collect();
    let to_dim = |d: Dim| match d {
        Dim::Unit => None,
        Dim::Var(v) => Some(DimId(classes.iter().position(|&(c, _)| c == v).expect("classified"))),
    };
    let dim_shapes: Vec<(Option<DimId>, Option<DimId>)> =
        resolved.iter().map(|&(r, c)| (to_dim(r), to_dim(c))).collect();

    // Storage: declared for parameters; temporaries follow the traversal
    // order of the op producing them.
    let mut storage: Vec<Option<Storage>> = flow.data.iter().map(|d| storage_of(d.declared)).collect();
    let mut nests = Vec::new();
    for op in &flow.ops {
        let mut dims_here: Vec<DimId> = Vec::new();
        for x in op.operands.iter().map(|x| x.data).chain([op.result]) {
            let (r, c) = dim_shapes[x.0];
            for d in [r, c].into_iter().flatten() {
                if !dims_here.contains(&d) {
                    dims_here.push(d);
                }
            }
        }
        let driver = op
            .operands
            .iter()
            .map(|x| x.data)
            .chain([op.result])
            .find(|x| matches!(dim_shapes[x.0], (Some(_), Some(_))));
        let order: Vec<DimId> = match driver {
            Some(m) => {
                let st = *storage[m.0].get_or_insert(Storage::RowMajor);
                let (r, c) = dim_shapes[m.0];
                let (r, c) = (r.unwrap(), c.unwrap());
                match st {
                    Storage::RowMajor => vec![r, c],
                    Storage::ColumnMajor => vec![c, r],
                }
            }
            None => dims_here.clone(),
        };
        if let (Some(_), Some(c)) = dim_shapes[op.result.0] {
            if storage[op.result.0].is_none() {
                storage[op.result.0] =
                    Some(if order.last() == Some(&c) { Storage::RowMajor } else { Storage::ColumnMajor });
            }
        }
        nests.push(order);
    }
    let storage: Vec<Storage> = storage.into_iter().map(|s| s.unwrap_or(Storage::RowMajor)).collect();

    let types: Vec<ContainerType> = dim_shapes
        .iter()
        .zip(&storage)
        .map(|(&(r, c), &st)| match (r, c) {
            (None, None) => ContainerType::Scalar,
            (Some(_), None) => ContainerType::column(ContainerType::Scalar),
            (None, Some(_)) => ContainerType::row(ContainerType::Scalar),
            (Some(_), Some(_)) => ContainerType::from_declared(DeclaredType::Matrix(match st {
                Storage::RowMajor => Orientation::Row,
                Storage::ColumnMajor => Orientation::Column,
            })),
        })
        .collect();

    let mut graph = KernelGraph { flow, dims, shapes: dim_shapes, storage, types, nests: Vec::new() };
    let nests = nests
        .into_iter()
        .zip(&graph.flow.ops)
        .map(|(order, op)| {
            let result_dims = graph.data_dims(op.result);
            let users: Vec<Vec<DimId>> = op
                .operands
                .iter()
                .map(|x| x.data)
                .chain([op.result])
                .map(|x| graph.data_dims(x))
                .collect();
            let axes = order
                .iter()
                .map(|&dim| Axis {
                    dim,
                    reduction: !result_dims.contains(&dim),
                    contiguous: users.iter().filter(|ds| ds.contains(&dim)).all(|ds| ds.last() == Some(&dim)),
                })
                .collect();
            OpNest { axes }
        })
        .collect();
    graph.nests = nests;
    Ok(graph)
}
