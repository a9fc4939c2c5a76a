//! Tape-based reverse-mode automatic differentiation over `f64` scalars.
//!
//! Every operation appends one node to a [`Tape`]; a node stores its parent
//! indices and the local partial derivatives computed during the forward
//! pass. [`Var::backward`] then accumulates adjoints in one reverse sweep.
//! Constants (`Var::constant`) live off-tape and cost nothing, which lets the
//! same generic code serve both as the differentiable path and as a plain
//! evaluation path.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Wengert list of recorded operations. Nodes only ever reference earlier
/// nodes, so a single reverse pass propagates all adjoints.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Introduces a differentiable leaf holding `value`.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push([0, 0], [0.0, 0.0]);
        // A leaf's parent slots are rewritten to itself with zero partials so
        // the backward sweep treats it as a no-op.
        self.nodes.borrow_mut()[index as usize].parents = [index, index];
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        assert!(index < u32::MAX as usize, "tape overflow");
        nodes.push(Node { parents, partials });
        index as u32
    }
}

/// A scalar value, optionally recorded on a tape. `tape == None` marks a
/// constant: it never receives a gradient and combining two constants never
/// touches any tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: 0,
            value,
        }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(tape) => Var {
                tape: Some(tape),
                index: tape.push([self.index, self.index], [partial, 0.0]),
                value,
            },
        }
    }

    fn binary(self, rhs: Var<'t>, value: f64, dl: f64, dr: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(value),
            (Some(tape), None) => Var {
                tape: Some(tape),
                index: tape.push([self.index, self.index], [dl, 0.0]),
                value,
            },
            (None, Some(tape)) => Var {
                tape: Some(tape),
                index: tape.push([rhs.index, rhs.index], [dr, 0.0]),
                value,
            },
            (Some(tape), Some(other)) => {
                debug_assert!(
                    std::ptr::eq(tape, other),
                    "vars from different tapes combined"
                );
                Var {
                    tape: Some(tape),
                    index: tape.push([self.index, rhs.index], [dl, dr]),
                    value,
                }
            }
        }
    }

    pub fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        self.unary(v, f64::from(n) * self.value.powi(n - 1))
    }

    /// Numerically stable softplus with derivative sigmoid(x).
    pub fn softplus(self) -> Self {
        self.unary(softplus_value(self.value), sigmoid(self.value))
    }

    /// Accumulates d(self)/d(node) for every node up to `self` and returns
    /// the adjoints. Constants yield an empty gradient.
    pub fn backward(self) -> Grads {
        let tape = match self.tape {
            None => return Grads { adjoints: Vec::new() },
            Some(t) => t,
        };
        let nodes = tape.nodes.borrow();
        let n = self.index as usize + 1;
        let mut adjoints = vec![0.0; n];
        adjoints[self.index as usize] = 1.0;
        for i in (0..n).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            adjoints[node.parents[0] as usize] += node.partials[0] * a;
            adjoints[node.parents[1] as usize] += node.partials[1] * a;
        }
        Grads { adjoints }
    }
}

/// Adjoints produced by [`Var::backward`].
pub struct Grads {
    adjoints: Vec<f64>,
}

impl Grads {
    /// Gradient with respect to `v`; zero for constants and for nodes the
    /// loss does not depend on.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            None => 0.0,
            Some(_) => self.adjoints.get(v.index as usize).copied().unwrap_or(0.0),
        }
    }
}

fn softplus_value(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.value;
        self.binary(rhs, self.value * inv, inv, -self.value * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

/// Scalar abstraction implemented by plain `f64` and by [`Var`]. Model,
/// kinematics and loss code is written once against this trait and runs both
/// as fast plain evaluation and as a taped differentiable pass.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn softplus(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn softplus(self) -> Self {
        softplus_value(self)
    }
}

impl<'t> Scalar for Var<'t> {
    fn constant(c: f64) -> Self {
        Var::constant(c)
    }
    fn value(&self) -> f64 {
        Var::value(*self)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn softplus(self) -> Self {
        Var::softplus(self)
    }
}
