//! Canonical printer. Output re-parses to a structurally identical tree.

use std::fmt::{self, Write};

use super::{BinOp, Node};

fn prec(node: &Node) -> u8 {
    match node {
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Const(c) if c.is_sign_negative() => 3,
        Node::Binary(BinOp::Pow, ..) => 4,
        Node::Const(_) | Node::Var(_) | Node::Call(..) => 5,
    }
}

fn child<W: Write>(w: &mut W, node: &Node, vars: &[String], paren: bool) -> fmt::Result {
    if paren {
        w.write_char('(')?;
        write_node(w, node, vars)?;
        w.write_char(')')
    } else {
        write_node(w, node, vars)
    }
}

pub(crate) fn write_node<W: Write>(w: &mut W, node: &Node, vars: &[String]) -> fmt::Result {
    match node {
        Node::Const(c) => write!(w, "{c}"),
        Node::Var(i) => w.write_str(&vars[*i]),
        Node::Neg(a) => {
            w.write_char('-')?;
            // `-(2)` keeps a negated literal distinct from the constant -2
            let paren = prec(a) < 3 || matches!(**a, Node::Const(c) if !c.is_sign_negative());
            child(w, a, vars, paren)
        }
        Node::Call(f, a) => {
            w.write_str(f.name())?;
            child(w, a, vars, true)
        }
        Node::Binary(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", prec(a) < 1, prec(b) <= 1),
                BinOp::Sub => (" - ", prec(a) < 1, prec(b) <= 1),
                BinOp::Mul => ("*", prec(a) < 2, prec(b) <= 2),
                BinOp::Div => ("/", prec(a) < 2, prec(b) <= 2),
                BinOp::Pow => ("^", prec(a) <= 4, prec(b) < 3),
            };
            child(w, a, vars, lp)?;
            w.write_str(sym)?;
            child(w, b, vars, rp)
        }
    }
}
