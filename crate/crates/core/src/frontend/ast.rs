//! Abstract syntax for kernel definitions.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Row,
    Column,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Row => Orientation::Column,
            Orientation::Column => Orientation::Row,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Orientation::Row => "row",
            Orientation::Column => "column",
        }
    }
}

/// Operand type as written in an `in:` or `out:` declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeclaredType {
    Scalar,
    Vector(Orientation),
    Matrix(Orientation),
}

impl DeclaredType {
    pub fn is_scalar(self) -> bool {
        matches!(self, DeclaredType::Scalar)
    }
}

impl fmt::Display for DeclaredType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeclaredType::Scalar => f.write_str("scalar"),
            DeclaredType::Vector(o) => write!(f, "vector({})", o.keyword()),
            DeclaredType::Matrix(o) => write!(f, "matrix({})", o.keyword()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub ty: DeclaredType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    Transpose(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn transpose(e: Expr) -> Self {
        Expr::Transpose(Box::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    /// Visits every variable reference, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Var(n) => f(n),
            Expr::Transpose(e) => e.for_each_var(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Transpose(..) | Expr::Var(..) => 3,
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Binary operators are left-associative, so a right operand of equal
        // precedence needs parentheses.
        match self {
            Expr::Var(n) => f.write_str(n),
            Expr::Transpose(e) => {
                e.write_operand(f, 3)?;
                f.write_str("'")
            }
            Expr::Add(a, b) => {
                a.write_operand(f, 1)?;
                f.write_str(" + ")?;
                b.write_operand(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_operand(f, 1)?;
                f.write_str(" - ")?;
                b.write_operand(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_operand(f, 2)?;
                f.write_str(" * ")?;
                b.write_operand(f, 3)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub target: String,
    pub expr: Expr,
}

/// A parsed kernel: name, typed inputs and outputs, and an ordered list of
/// assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSpec {
    pub name: String,
    pub inputs: Vec<Decl>,
    pub outputs: Vec<Decl>,
    pub statements: Vec<Statement>,
}

impl KernelSpec {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.inputs.iter().chain(&self.outputs).find(|d| d.name == name)
    }

    /// Inputs followed by outputs, in declaration order.
    pub fn parameters(&self) -> impl Iterator<Item = &Decl> {
        self.inputs.iter().chain(&self.outputs)
    }
}

fn write_decls(f: &mut fmt::Formatter<'_>, decls: &[Decl]) -> fmt::Result {
    for (n, d) in decls.iter().enumerate() {
        let sep = if n + 1 < decls.len() { "," } else { "" };
        writeln!(f, "    {} : {}{}", d.name, d.ty, sep)?;
    }
    Ok(())
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.name)?;
        writeln!(f, "in:")?;
        write_decls(f, &self.inputs)?;
        writeln!(f, "out:")?;
        write_decls(f, &self.outputs)?;
        writeln!(f, "{{")?;
        for s in &self.statements {
            writeln!(f, "    {} = {}", s.target, s.expr)?;
        }
        writeln!(f, "}}")
    }
}
