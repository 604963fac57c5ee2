//! Scalar expressions over `x1..xn` with exact first derivatives.
//!
//! Expressions are parsed once and then evaluated many times, either as plain
//! `f64` or as forward-mode dual numbers for gradients.

mod dual;
mod parser;

use std::fmt;

pub use dual::Dual;
pub use parser::parse;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable x{index} at position {position} (dimension is {dimension})")]
    UnknownVariable {
        index: usize,
        dimension: usize,
        position: usize,
    },
    #[error("evaluation error: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Expression tree. Variables are 1-based, matching the `x1..xn` surface syntax.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn constant(c: f64) -> Node {
        Node::Const(c)
    }

    pub fn var(i: usize) -> Node {
        Node::Var(i)
    }

    pub fn binary(op: BinOp, a: Node, b: Node) -> Node {
        Node::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Node) -> Node {
        Node::Call(f, Box::new(a))
    }

    fn max_var(&self) -> usize {
        match self {
            Node::Const(_) => 0,
            Node::Var(i) => *i,
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

/// Numeric type an expression can be evaluated over.
pub trait Number: Copy + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> + std::ops::Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(self) -> f64;
    fn is_finite(self) -> bool;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// True when the value carries no dependence on the seeded direction.
    fn is_const_like(self) -> bool;
}

impl Number for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn is_const_like(self) -> bool {
        true
    }
}

/// A parsed expression together with the dimension it was checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    dim: usize,
}

impl Expression {
    /// Wraps a tree, checking that every variable index is within `dim`.
    pub fn from_node(root: Node, dim: usize) -> Result<Self, ExprError> {
        let max = root.max_var();
        if max > dim {
            return Err(ExprError::UnknownVariable {
                index: max,
                dimension: dim,
                position: 0,
            });
        }
        Ok(Expression { root, dim })
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    fn check_point(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.dim {
            return Err(ExprError::Eval(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.check_point(x)?;
        eval_node(&self.root, &|i| x[i - 1])
    }

    /// Value and the directional derivative along the unit vector `e_k` (0-based).
    pub fn value_and_partial(&self, x: &[f64], k: usize) -> Result<(f64, f64), ExprError> {
        self.check_point(x)?;
        let d = eval_node(&self.root, &|i| {
            Dual::new(x[i - 1], if i - 1 == k { 1.0 } else { 0.0 })
        })?;
        Ok((d.re, d.eps))
    }

    /// Exact gradient, one dual-number pass per coordinate.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.value_and_gradient(x).map(|(_, g)| g)
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        self.check_point(x)?;
        let mut grad = Vec::with_capacity(self.dim);
        let mut value = 0.0;
        for k in 0..self.dim {
            let (v, d) = self.value_and_partial(x, k)?;
            value = v;
            grad.push(d);
        }
        if self.dim == 0 {
            value = self.evaluate(x)?;
        }
        Ok((value, grad))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

/// Canonical, fully parenthesized form. Re-parsing it yields the same tree for
/// any tree the parser can produce (non-negative literals).
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

fn finite<T: Number>(v: T, what: &str) -> Result<T, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Eval(format!("non-finite result in {what}")))
    }
}

fn eval_node<T: Number>(node: &Node, var: &dyn Fn(usize) -> T) -> Result<T, ExprError> {
    match node {
        Node::Const(c) => Ok(T::constant(*c)),
        Node::Var(i) => Ok(var(*i)),
        Node::Neg(a) => Ok(-eval_node(a, var)?),
        Node::Call(func, a) => {
            let u = eval_node(a, var)?;
            let r = match func {
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Exp => u.exp(),
                Func::Tanh => u.tanh(),
                Func::Sqrt => {
                    if u.value() < 0.0 {
                        return Err(ExprError::Eval("sqrt of a negative number".into()));
                    }
                    u.sqrt()
                }
            };
            finite(r, func.name())
        }
        Node::Binary(op, a, b) => {
            let u = eval_node(a, var)?;
            let v = eval_node(b, var)?;
            match op {
                BinOp::Add => finite(u + v, "+"),
                BinOp::Sub => finite(u - v, "-"),
                BinOp::Mul => finite(u * v, "*"),
                BinOp::Div => {
                    if v.value() == 0.0 {
                        return Err(ExprError::Eval("division by zero".into()));
                    }
                    finite(u / v, "/")
                }
                BinOp::Pow => finite(pow(u, v)?, "^"),
            }
        }
    }
}

fn pow<T: Number>(base: T, exponent: T) -> Result<T, ExprError> {
    let e = exponent.value();
    let b = base.value();
    let integral = e.fract() == 0.0 && e.abs() <= i32::MAX as f64;
    if integral {
        let n = e as i32;
        if b == 0.0 && n < 0 {
            return Err(ExprError::Eval("zero raised to a negative power".into()));
        }
        let w = if n == 0 { T::constant(1.0) } else { base.powi(n) };
        if exponent.is_const_like() {
            return Ok(w);
        }
        // Variable exponent that happens to be integral here: u^v = exp(v ln u).
        if b <= 0.0 {
            return Err(ExprError::Eval(
                "variable exponent requires a positive base".into(),
            ));
        }
        return Ok((exponent * base.ln()).exp());
    }
    if b <= 0.0 {
        return Err(ExprError::Eval(
            "non-integer exponent requires a positive base".into(),
        ));
    }
    Ok((exponent * base.ln()).exp())
}
