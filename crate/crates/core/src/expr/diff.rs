use super::{print, BinOp, Expr, Func, Node};
use crate::error::{PeaceError, Result};

fn is_const(n: &Node, v: f64) -> bool {
    matches!(n, Node::Const(c) if *c == v)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        _ => Node::binary(BinOp::Add, a, b),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
        _ if is_const(&b, 0.0) => a,
        _ if is_const(&a, 0.0) => neg(b),
        _ => Node::binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Node::Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        _ => Node::binary(BinOp::Mul, a, b),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Const(x), Node::Const(y)) if *y != 0.0 => Node::Const(x / y),
        _ if is_const(&a, 0.0) => Node::Const(0.0),
        _ if is_const(&b, 1.0) => a,
        _ => Node::binary(BinOp::Div, a, b),
    }
}

fn pow(a: Node, b: Node) -> Node {
    match (&a, &b) {
        _ if is_const(&b, 0.0) => Node::Const(1.0),
        _ if is_const(&b, 1.0) => a,
        (Node::Const(x), Node::Const(y)) => Node::Const(super::pow(*x, *y)),
        _ => Node::binary(BinOp::Pow, a, b),
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn d(node: &Node, var: usize, vars: &[String]) -> Result<Node> {
    if !node.depends_on(var) {
        return Ok(Node::Const(0.0));
    }
    Ok(match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(d(a, var, vars)?),
        Node::Binary(op, a, b) => {
            let (u, v) = (a.as_ref().clone(), b.as_ref().clone());
            match op {
                BinOp::Add => add(d(a, var, vars)?, d(b, var, vars)?),
                BinOp::Sub => sub(d(a, var, vars)?, d(b, var, vars)?),
                BinOp::Mul => add(mul(d(a, var, vars)?, v), mul(u, d(b, var, vars)?)),
                BinOp::Div => {
                    let num = sub(mul(d(a, var, vars)?, v.clone()), mul(u, d(b, var, vars)?));
                    div(num, pow(v, Node::Const(2.0)))
                }
                BinOp::Pow if !b.depends_on(var) => {
                    // power rule: n * u^(n-1) * u'
                    let exp_m1 = sub(v.clone(), Node::Const(1.0));
                    mul(mul(v, pow(u, exp_m1)), d(a, var, vars)?)
                }
                BinOp::Pow => {
                    // u^v = exp(v ln u): (u^v) * (v' ln u + v u'/u)
                    let ln_u = Node::call(Func::Ln, u.clone());
                    let inner = add(
                        mul(d(b, var, vars)?, ln_u),
                        div(mul(v.clone(), d(a, var, vars)?), u.clone()),
                    );
                    mul(pow(u, v), inner)
                }
            }
        }
        Node::Call(f, a) => {
            let u = a.as_ref().clone();
            let du = d(a, var, vars)?;
            match f {
                Func::Exp => mul(du, Node::call(Func::Exp, u)),
                Func::Ln => div(du, u),
                Func::Sqrt => div(du, mul(Node::Const(2.0), Node::call(Func::Sqrt, u))),
                Func::Sin => mul(du, Node::call(Func::Cos, u)),
                Func::Cos => neg(mul(du, Node::call(Func::Sin, u))),
                Func::Abs => {
                    let mut text = String::new();
                    let _ = print::write_node(&mut text, node, vars);
                    return Err(PeaceError::NonDifferentiable { node: text });
                }
            }
        }
    })
}

pub(crate) fn differentiate(e: &Expr, var: &str) -> Result<Expr> {
    let idx = e.var_index(var).ok_or_else(|| PeaceError::UnknownIdentifier {
        name: var.to_string(),
        pos: 0,
    })?;
    let root = d(e.root(), idx, e.vars())?;
    Ok(Expr::new(root, e.vars_arc().clone()))
}
