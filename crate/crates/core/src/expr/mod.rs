//! A small expression language for structural functions and densities.
//!
//! Expressions are parsed against an ordered list of declared variable
//! names; variable references are stored as indices into that list, so
//! evaluation takes a plain `&[f64]` in declaration order.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | ident | '(' expr ')' | func '(' expr (',' expr)? ')'
//! func   := exp | ln | sqrt | sin | cos | abs | pow
//! ```

mod diff;
mod parser;
mod print;

use std::fmt;
use std::sync::Arc;

use crate::error::Result;

pub use parser::parse_expression;

/// Unary functions admitted by the grammar (`pow` parses to [`BinOp::Pow`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Abs => x.abs(),
        }
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

/// Expression tree node. Variables are indices into the owning [`Expr`]'s
/// variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: Node) -> Node {
        Node::Call(func, Box::new(arg))
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => values[*i],
            Node::Neg(a) => -a.eval(values),
            Node::Binary(op, a, b) => {
                let (a, b) = (a.eval(values), b.eval(values));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(values)),
        }
    }

    /// True if the subtree references variable `var`.
    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(i) => *i == var,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(var),
            Node::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    pub fn contains_func(&self, func: Func) -> bool {
        match self {
            Node::Const(_) | Node::Var(_) => false,
            Node::Neg(a) => a.contains_func(func),
            Node::Call(f, a) => *f == func || a.contains_func(func),
            Node::Binary(_, a, b) => a.contains_func(func) || b.contains_func(func),
        }
    }

    /// Replaces every `Var(i)` by `replacements[i]`.
    pub fn substitute(&self, replacements: &[Node]) -> Node {
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(i) => replacements[*i].clone(),
            Node::Neg(a) => Node::Neg(Box::new(a.substitute(replacements))),
            Node::Binary(op, a, b) => Node::binary(*op, a.substitute(replacements), b.substitute(replacements)),
            Node::Call(f, a) => Node::call(*f, a.substitute(replacements)),
        }
    }

    fn first_violation(&self, values: &[f64]) -> Option<(Func, f64)> {
        match self {
            Node::Const(_) | Node::Var(_) => None,
            Node::Neg(a) => a.first_violation(values),
            Node::Binary(_, a, b) => a.first_violation(values).or_else(|| b.first_violation(values)),
            Node::Call(f, a) => {
                if let Some(v) = a.first_violation(values) {
                    return Some(v);
                }
                let arg = a.eval(values);
                match f {
                    Func::Ln if !(arg > 0.0) => Some((*f, arg)),
                    Func::Sqrt if !(arg >= 0.0) => Some((*f, arg)),
                    _ => None,
                }
            }
        }
    }
}

/// `0^0 := 1`, otherwise `powf`. Integer exponents go through `powi` so
/// negative bases stay finite.
#[inline]
pub(crate) fn pow(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// A parsed expression together with the variable names it was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Arc<Vec<String>>,
}

impl Expr {
    pub fn new(root: Node, vars: Arc<Vec<String>>) -> Self {
        Expr { root, vars }
    }

    pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Self> {
        parse_expression(source, vars)
    }

    pub fn constant(value: f64, vars: Arc<Vec<String>>) -> Self {
        Expr::new(Node::Const(value), vars)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub(crate) fn vars_arc(&self) -> &Arc<Vec<String>> {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    #[inline]
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.root.eval(values)
    }

    pub fn contains_abs(&self) -> bool {
        self.root.contains_func(Func::Abs)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.root.depends_on(var)
    }

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Result<Expr> {
        diff::differentiate(self, var)
    }

    /// Reports the first `ln` of a non-positive or `sqrt` of a negative
    /// argument encountered while evaluating at `values`.
    pub fn domain_violation(&self, values: &[f64]) -> Option<String> {
        self.root
            .first_violation(values)
            .map(|(f, arg)| format!("{}({}) at {:?}", f.name(), arg, values))
    }

    /// Re-expresses this expression over a new variable list, replacing each
    /// old variable by the matching node in `replacements`.
    pub fn substitute(&self, replacements: &[Node], new_vars: Arc<Vec<String>>) -> Expr {
        assert_eq!(replacements.len(), self.vars.len());
        Expr::new(self.root.substitute(replacements), new_vars)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_node(f, &self.root, &self.vars)
    }
}

/// Free-function form of [`Expr::differentiate`].
pub fn differentiate(ast: &Expr, var: &str) -> Result<Expr> {
    ast.differentiate(var)
}
