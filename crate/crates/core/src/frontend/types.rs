//! Container types: the nested row/column/scalar iteration-space description
//! attached to every operand.

use std::fmt;

use super::ast::{DeclaredType, Orientation};

/// `T ::= O<T> | S`, `O ::= R | C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ContainerType {
    Scalar,
    Oriented(Orientation, Box<ContainerType>),
}

impl ContainerType {
    pub fn row(elem: ContainerType) -> Self {
        ContainerType::Oriented(Orientation::Row, Box::new(elem))
    }

    pub fn column(elem: ContainerType) -> Self {
        ContainerType::Oriented(Orientation::Column, Box::new(elem))
    }

    /// `vector(column)` is `C<S>`, `vector(row)` is `R<S>`, `matrix(row)` is a
    /// column of rows `C<R<S>>` and `matrix(column)` is a row of columns
    /// `R<C<S>>`.
    pub fn from_declared(ty: DeclaredType) -> Self {
        match ty {
            DeclaredType::Scalar => ContainerType::Scalar,
            DeclaredType::Vector(Orientation::Column) => Self::column(ContainerType::Scalar),
            DeclaredType::Vector(Orientation::Row) => Self::row(ContainerType::Scalar),
            DeclaredType::Matrix(Orientation::Row) => Self::column(Self::row(ContainerType::Scalar)),
            DeclaredType::Matrix(Orientation::Column) => Self::row(Self::column(ContainerType::Scalar)),
        }
    }

    /// Transposition is a view: it swaps every orientation label.
    pub fn transpose(&self) -> Self {
        match self {
            ContainerType::Scalar => ContainerType::Scalar,
            ContainerType::Oriented(o, e) => ContainerType::Oriented(o.flip(), Box::new(e.transpose())),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ContainerType::Scalar => 0,
            ContainerType::Oriented(_, e) => 1 + e.depth(),
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, ContainerType::Scalar)
    }
}

impl fmt::Display for ContainerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContainerType::Scalar => f.write_str("S"),
            ContainerType::Oriented(Orientation::Row, e) => write!(f, "R<{e}>"),
            ContainerType::Oriented(Orientation::Column, e) => write!(f, "C<{e}>"),
        }
    }
}
