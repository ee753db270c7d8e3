//! User-defined maps written as text.
//!
//! An expression of order `k` ranges over the variables `x1 .. xk`, where `x1`
//! is the most recent state `u_n` and `xk` is the oldest, `u_{n-k+1}`.
//! Expressions can be evaluated as plain `f64` or with [`DualValue`]s, which
//! carry the exact first partials with respect to every variable.
//!
//! The accepted grammar is documented in `docs/expression-grammar.md`.

mod dual;
mod parser;

use std::fmt;

use thiserror::Error;

pub use dual::DualValue;
pub use parser::parse_expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `x{index}` at byte {offset} is outside x1..x{order}")]
    VariableOutOfRange {
        index: usize,
        order: usize,
        offset: usize,
    },
    #[error("expression order must be positive")]
    ZeroOrder,
    #[error("expected a point with {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("`{subexpr}` is not differentiable here: {reason}")]
    NotDifferentiable { subexpr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// A node of the expression tree. Variables are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// A parsed map `f: R^k -> R` together with its declared order `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
    order: usize,
}

impl ExprAst {
    /// Wraps a tree built by hand, checking the variable indices against `order`.
    pub fn new(root: Node, order: usize) -> Result<Self, ExprError> {
        if order == 0 {
            return Err(ExprError::ZeroOrder);
        }
        check_vars(&root, order)?;
        Ok(Self { root, order })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.check_arity(point)?;
        eval_node(&self.root, point)
    }

    pub fn eval_dual(&self, point: &[f64]) -> Result<DualValue, ExprError> {
        self.check_arity(point)?;
        eval_node_dual(&self.root, point)
    }

    fn check_arity(&self, point: &[f64]) -> Result<(), ExprError> {
        if point.len() != self.order {
            return Err(ExprError::Arity {
                expected: self.order,
                got: point.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// Evaluates `ast` at `point` (`point[0]` is `x1`).
pub fn eval_expr(ast: &ExprAst, point: &[f64]) -> Result<f64, ExprError> {
    ast.eval(point)
}

/// Evaluates `ast` at `point` with forward-mode partials.
pub fn eval_expr_dual(ast: &ExprAst, point: &[f64]) -> Result<DualValue, ExprError> {
    ast.eval_dual(point)
}

fn check_vars(node: &Node, order: usize) -> Result<(), ExprError> {
    match node {
        Node::Const(_) => Ok(()),
        Node::Var(i) if *i >= 1 && *i <= order => Ok(()),
        Node::Var(i) => Err(ExprError::VariableOutOfRange {
            index: *i,
            order,
            offset: 0,
        }),
        Node::Unary(_, a) => check_vars(a, order),
        Node::Binary(_, a, b) => {
            check_vars(a, order)?;
            check_vars(b, order)
        }
    }
}

fn domain(node: &Node, reason: &str) -> ExprError {
    ExprError::Domain {
        subexpr: node.to_string(),
        reason: reason.to_string(),
    }
}

fn not_differentiable(node: &Node, reason: &str) -> ExprError {
    ExprError::NotDifferentiable {
        subexpr: node.to_string(),
        reason: reason.to_string(),
    }
}

// Scalar kernels shared by both evaluation paths, so that the value of a
// dual evaluation is bit-identical to the plain one.

fn unary_scalar(node: &Node, op: UnaryOp, a: f64) -> Result<f64, ExprError> {
    match op {
        UnaryOp::Neg => Ok(-a),
        UnaryOp::Exp => Ok(a.exp()),
        UnaryOp::Log if a > 0.0 => Ok(a.ln()),
        UnaryOp::Log => Err(domain(node, "logarithm of a nonpositive value")),
        UnaryOp::Sqrt if a >= 0.0 => Ok(a.sqrt()),
        UnaryOp::Sqrt => Err(domain(node, "square root of a negative value")),
        UnaryOp::Abs => Ok(a.abs()),
    }
}

fn binary_scalar(node: &Node, op: BinaryOp, a: f64, b: f64) -> Result<f64, ExprError> {
    match op {
        BinaryOp::Add => Ok(a + b),
        BinaryOp::Sub => Ok(a - b),
        BinaryOp::Mul => Ok(a * b),
        BinaryOp::Div if b == 0.0 => Err(domain(node, "division by zero")),
        BinaryOp::Div => Ok(a / b),
        BinaryOp::Pow => pow_scalar(node, a, b),
    }
}

fn pow_scalar(node: &Node, base: f64, exponent: f64) -> Result<f64, ExprError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(domain(node, "non-integer power of a negative base"));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(domain(node, "negative power of zero"));
    }
    Ok(base.powf(exponent))
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    match node {
        Node::Const(v) => Ok(*v),
        Node::Var(i) => Ok(x[i - 1]),
        Node::Unary(op, a) => {
            let a = eval_node(a, x)?;
            unary_scalar(node, *op, a)
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, x)?;
            let b = eval_node(b, x)?;
            binary_scalar(node, *op, a, b)
        }
    }
}

fn eval_node_dual(node: &Node, x: &[f64]) -> Result<DualValue, ExprError> {
    let k = x.len();
    match node {
        Node::Const(v) => Ok(DualValue::constant(*v, k)),
        Node::Var(i) => Ok(DualValue::variable(x[i - 1], i - 1, k)),
        Node::Unary(op, a) => {
            let a = eval_node_dual(a, x)?;
            let value = unary_scalar(node, *op, a.value)?;
            let scale = match op {
                UnaryOp::Neg => -1.0,
                UnaryOp::Exp => value,
                UnaryOp::Log => 1.0 / a.value,
                UnaryOp::Sqrt => {
                    if a.value == 0.0 {
                        if a.is_constant() {
                            0.0
                        } else {
                            return Err(not_differentiable(node, "square root at zero"));
                        }
                    } else {
                        0.5 / value
                    }
                }
                UnaryOp::Abs => {
                    if a.value == 0.0 {
                        if a.is_constant() {
                            0.0
                        } else {
                            return Err(not_differentiable(node, "absolute value at zero"));
                        }
                    } else {
                        a.value.signum()
                    }
                }
            };
            Ok(a.chain(value, scale))
        }
        Node::Binary(op, a, b) => {
            let a = eval_node_dual(a, x)?;
            let b = eval_node_dual(b, x)?;
            let value = binary_scalar(node, *op, a.value, b.value)?;
            match op {
                BinaryOp::Add => Ok(DualValue::combine(value, &a, 1.0, &b, 1.0)),
                BinaryOp::Sub => Ok(DualValue::combine(value, &a, 1.0, &b, -1.0)),
                BinaryOp::Mul => Ok(DualValue::combine(value, &a, b.value, &b, a.value)),
                // (a/b)' = a'/b - (a/b) b'/b
                BinaryOp::Div => Ok(DualValue::combine(
                    value,
                    &a,
                    1.0 / b.value,
                    &b,
                    -value / b.value,
                )),
                BinaryOp::Pow => {
                    let wrt_base = if a.is_constant() {
                        0.0
                    } else if a.value == 0.0 && b.value < 1.0 && b.value != 0.0 {
                        return Err(not_differentiable(node, "power below one at zero"));
                    } else {
                        b.value * pow_scalar(node, a.value, b.value - 1.0)?
                    };
                    let wrt_exponent = if b.is_constant() || (a.value == 0.0 && b.value > 0.0) {
                        0.0
                    } else if a.value > 0.0 {
                        value * a.value.ln()
                    } else {
                        return Err(not_differentiable(
                            node,
                            "variable exponent on a nonpositive base",
                        ));
                    };
                    Ok(DualValue::combine(value, &a, wrt_base, &b, wrt_exponent))
                }
            }
        }
    }
}
