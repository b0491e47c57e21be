//! Swarm STL formulas: parsing, negation normal form, and lifting of
//! agent-count predicates to per-swarm ellipsoid atoms.
//!
//! Grammar (lowest precedence first):
//!
//! ```text
//! phi  := or
//! or   := and ('|' and)*
//! and  := until ('&' until)*
//! until:= unary ('U[' num ',' num ']' unary)?
//! unary:= 'True' | atom | '!' atom | 'G[' num ',' num ']' unary
//!       | 'F[' num ',' num ']' unary | '(' phi ')'
//! atom := IDENT ('{' int '}')?
//! ```
//!
//! An atom `R{n}` holds when at least `n` agents are inside the polytope
//! region named `R`. When `{n}` is omitted it defaults to the smallest swarm
//! size, i.e. "all agents of whichever swarm takes the task".

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("interval bounds must satisfy 0 <= a <= b, got [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("predicate requires {required} agents but only {available} exist")]
    CountTooLarge { required: usize, available: usize },
    #[error("no swarm has the {required} agents required by a positive `{region}` atom")]
    Unliftable { region: String, required: usize },
}

/// Closed time interval `[lo, hi]` with `0 <= lo <= hi`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, FormulaError> {
        if !(0.0..=f64::INFINITY).contains(&lo) || hi < lo || !hi.is_finite() {
            return Err(FormulaError::BadInterval(lo, hi));
        }
        Ok(Self { lo, hi })
    }
}

/// Region predicate: at least `count` agents inside region `region`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub region: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(Atom),
    NotPred(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "True"),
            Formula::Pred(a) => write!(f, "{}{{{}}}", a.region, a.count),
            Formula::NotPred(a) => write!(f, "!{}{{{}}}", a.region, a.count),
            Formula::Not(c) => write!(f, "!({c})"),
            Formula::And(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| format!("({c})")).collect();
                write!(f, "{}", parts.join(" & "))
            }
            Formula::Or(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| format!("({c})")).collect();
                write!(f, "{}", parts.join(" | "))
            }
            Formula::Always(iv, c) => write!(f, "G[{},{}] ({c})", iv.lo, iv.hi),
            Formula::Eventually(iv, c) => write!(f, "F[{},{}] ({c})", iv.lo, iv.hi),
            Formula::Until(iv, l, r) => write!(f, "({l}) U[{},{}] ({r})", iv.lo, iv.hi),
        }
    }
}

impl Formula {
    /// Top-level conjuncts (the formula itself when it is not a conjunction).
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(cs) => cs.iter().collect(),
            other => vec![other],
        }
    }

    /// Syntactic horizon: the largest time offset at which satisfaction of
    /// this formula may still depend on the signal.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => 0.0,
            Formula::Not(c) => c.horizon(),
            Formula::And(cs) | Formula::Or(cs) => {
                cs.iter().map(|c| c.horizon()).fold(0.0, f64::max)
            }
            Formula::Always(iv, c) | Formula::Eventually(iv, c) => iv.hi + c.horizon(),
            Formula::Until(iv, l, r) => iv.hi + l.horizon().max(r.horizon()),
        }
    }
}

/// Names and sizes the parser needs to resolve atoms.
pub struct ParseContext<'a> {
    pub regions: &'a [String],
    pub total_agents: usize,
    pub min_swarm_size: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    ctx: &'a ParseContext<'a>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<(), FormulaError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn number(&mut self) -> Result<f64, FormulaError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit()
                || self.bytes[self.pos] == b'.'
                || self.bytes[self.pos] == b'-'
                || self.bytes[self.pos] == b'+'
                || self.bytes[self.pos] == b'e'
                || self.bytes[self.pos] == b'E')
        {
            self.pos += 1;
        }
        self.text[start..self.pos]
            .parse::<f64>()
            .map_err(|_| FormulaError::Syntax { pos: start, msg: "expected a number".into() })
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an identifier");
        }
        Ok(self.text[start..self.pos].to_string())
    }

    fn interval(&mut self) -> Result<Interval, FormulaError> {
        self.eat(b'[')?;
        let lo = self.number()?;
        self.eat(b',')?;
        let hi = self.number()?;
        self.eat(b']')?;
        Interval::new(lo, hi)
    }

    fn atom(&mut self) -> Result<Atom, FormulaError> {
        let name = self.ident()?;
        let count = if self.peek() == Some(b'{') {
            self.pos += 1;
            let n = self.number()?;
            self.eat(b'}')?;
            if n < 1.0 || n.fract() != 0.0 {
                return self.err("agent count must be a positive integer");
            }
            n as usize
        } else {
            self.ctx.min_swarm_size
        };
        if !self.ctx.regions.contains(&name) {
            return Err(FormulaError::UnknownRegion(name));
        }
        if count > self.ctx.total_agents {
            return Err(FormulaError::CountTooLarge {
                required: count,
                available: self.ctx.total_agents,
            });
        }
        Ok(Atom { region: name, count })
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.or()?;
                self.eat(b')')?;
                Ok(inner)
            }
            Some(b'!') => {
                self.pos += 1;
                Ok(Formula::NotPred(self.atom()?))
            }
            Some(b'G') if self.bytes.get(self.pos + 1) == Some(&b'[') => {
                self.pos += 1;
                let iv = self.interval()?;
                Ok(Formula::Always(iv, Box::new(self.unary()?)))
            }
            Some(b'F') if self.bytes.get(self.pos + 1) == Some(&b'[') => {
                self.pos += 1;
                let iv = self.interval()?;
                Ok(Formula::Eventually(iv, Box::new(self.unary()?)))
            }
            Some(_) => {
                // `True` or a region atom.
                let save = self.pos;
                let name = self.ident()?;
                if name == "True" {
                    return Ok(Formula::True);
                }
                self.pos = save;
                Ok(Formula::Pred(self.atom()?))
            }
            None => self.err("unexpected end of formula"),
        }
    }

    fn until(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.unary()?;
        if self.peek() == Some(b'U') && self.bytes.get(self.pos + 1) == Some(&b'[') {
            self.pos += 1;
            let iv = self.interval()?;
            let rhs = self.unary()?;
            Ok(Formula::Until(iv, Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn and(&mut self) -> Result<Formula, FormulaError> {
        let mut parts = vec![self.until()?];
        while self.peek() == Some(b'&') {
            self.pos += 1;
            parts.push(self.until()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn or(&mut self) -> Result<Formula, FormulaError> {
        let mut parts = vec![self.and()?];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            parts.push(self.and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }
}

/// Parse a formula, resolving region names and default agent counts.
pub fn parse(text: &str, ctx: &ParseContext) -> Result<Formula, FormulaError> {
    let mut p = Parser { text, bytes: text.as_bytes(), pos: 0, ctx };
    let f = p.or()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return p.err("trailing input after formula");
    }
    Ok(f)
}

/// Push negations down to predicate leaves and drop double negations.
pub fn to_nnf(f: &Formula) -> Formula {
    fn pos(f: &Formula) -> Formula {
        match f {
            Formula::True | Formula::Pred(_) | Formula::NotPred(_) => f.clone(),
            Formula::Not(c) => neg(c),
            Formula::And(cs) => Formula::And(cs.iter().map(pos).collect()),
            Formula::Or(cs) => Formula::Or(cs.iter().map(pos).collect()),
            Formula::Always(iv, c) => Formula::Always(*iv, Box::new(pos(c))),
            Formula::Eventually(iv, c) => Formula::Eventually(*iv, Box::new(pos(c))),
            Formula::Until(iv, l, r) => {
                Formula::Until(*iv, Box::new(pos(l)), Box::new(pos(r)))
            }
        }
    }
    fn neg(f: &Formula) -> Formula {
        match f {
            Formula::True => Formula::Not(Box::new(Formula::True)),
            Formula::Pred(a) => Formula::NotPred(a.clone()),
            Formula::NotPred(a) => Formula::Pred(a.clone()),
            Formula::Not(c) => pos(c),
            Formula::And(cs) => Formula::Or(cs.iter().map(neg).collect()),
            Formula::Or(cs) => Formula::And(cs.iter().map(neg).collect()),
            Formula::Always(iv, c) => Formula::Eventually(*iv, Box::new(neg(c))),
            Formula::Eventually(iv, c) => Formula::Always(*iv, Box::new(neg(c))),
            // The grammar has no release operator; writers use NNF-dual forms.
            Formula::Until(_, _, _) => {
                panic!("negation of Until is not supported; rewrite the formula in NNF")
            }
        }
    }
    pos(f)
}

/// Per-swarm ellipsoid atom: the whole bounding ellipsoid of `swarm` lies
/// inside (`negated = false`) or outside (`negated = true`) the region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SwarmAtom {
    pub swarm: usize,
    pub region: String,
    pub negated: bool,
}

/// Formula over per-swarm atoms; temporal and Boolean structure mirrors
/// [`Formula`].
#[derive(Debug, Clone, PartialEq)]
pub enum Lifted {
    True,
    False,
    Atom(SwarmAtom),
    And(Vec<Lifted>),
    Or(Vec<Lifted>),
    Always(Interval, Box<Lifted>),
    Eventually(Interval, Box<Lifted>),
    Until(Interval, Box<Lifted>, Box<Lifted>),
}

impl Lifted {
    pub fn horizon(&self) -> f64 {
        match self {
            Lifted::True | Lifted::False | Lifted::Atom(_) => 0.0,
            Lifted::And(cs) | Lifted::Or(cs) => cs.iter().map(|c| c.horizon()).fold(0.0, f64::max),
            Lifted::Always(iv, c) | Lifted::Eventually(iv, c) => iv.hi + c.horizon(),
            Lifted::Until(iv, l, r) => iv.hi + l.horizon().max(r.horizon()),
        }
    }

    /// Indices of all swarms referenced by atoms below this node.
    pub fn swarms(&self) -> Vec<usize> {
        let mut out = Vec::new();
        fn walk(f: &Lifted, out: &mut Vec<usize>) {
            match f {
                Lifted::True | Lifted::False => {}
                Lifted::Atom(a) => {
                    if !out.contains(&a.swarm) {
                        out.push(a.swarm);
                    }
                }
                Lifted::And(cs) | Lifted::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
                Lifted::Always(_, c) | Lifted::Eventually(_, c) => walk(c, out),
                Lifted::Until(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        walk(self, &mut out);
        out.sort_unstable();
        out
    }
}

fn fold_and(cs: Vec<Lifted>) -> Lifted {
    let mut out = Vec::new();
    for c in cs {
        match c {
            Lifted::True => {}
            Lifted::False => return Lifted::False,
            Lifted::And(inner) => out.extend(inner),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => Lifted::True,
        1 => out.pop().unwrap(),
        _ => Lifted::And(out),
    }
}

fn fold_or(cs: Vec<Lifted>) -> Lifted {
    let mut out = Vec::new();
    for c in cs {
        match c {
            Lifted::False => {}
            Lifted::True => return Lifted::True,
            Lifted::Or(inner) => out.extend(inner),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => Lifted::False,
        1 => out.pop().unwrap(),
        _ => Lifted::Or(out),
    }
}

/// Swarms with at least `count` agents.
pub fn qualifying_swarms(sizes: &BTreeMap<usize, usize>, count: usize) -> Vec<usize> {
    sizes.iter().filter(|(_, n)| **n >= count).map(|(s, _)| *s).collect()
}

/// Swarms with fewer than `count` agents.
pub fn small_swarms(sizes: &BTreeMap<usize, usize>, count: usize) -> Vec<usize> {
    sizes.iter().filter(|(_, n)| **n < count).map(|(s, _)| *s).collect()
}

/// Replace each agent-count predicate by its per-swarm expansion.
///
/// A positive atom becomes a disjunction over swarms large enough to witness
/// the count on their own. A negated atom becomes: either every swarm is
/// entirely outside the region, or exactly one swarm too small to witness the
/// count is entirely inside while every other swarm is entirely outside.
///
/// `sizes` maps swarm index to agent count. Errors when a positive atom has
/// no qualifying swarm and the surrounding structure cannot absorb it.
pub fn lift(f: &Formula, sizes: &BTreeMap<usize, usize>) -> Result<Lifted, FormulaError> {
    fn go(f: &Formula, sizes: &BTreeMap<usize, usize>) -> Result<Lifted, FormulaError> {
        Ok(match f {
            Formula::True => Lifted::True,
            Formula::Not(_) => panic!("lift requires NNF input; call to_nnf first"),
            Formula::Pred(a) => {
                let atoms: Vec<Lifted> = qualifying_swarms(sizes, a.count)
                    .into_iter()
                    .map(|s| {
                        Lifted::Atom(SwarmAtom { swarm: s, region: a.region.clone(), negated: false })
                    })
                    .collect();
                fold_or(atoms)
            }
            Formula::NotPred(a) => {
                let all_out: Vec<Lifted> = sizes
                    .keys()
                    .map(|s| {
                        Lifted::Atom(SwarmAtom { swarm: *s, region: a.region.clone(), negated: true })
                    })
                    .collect();
                let mut branches = vec![fold_and(all_out)];
                for s in small_swarms(sizes, a.count) {
                    let mut parts = vec![Lifted::Atom(SwarmAtom {
                        swarm: s,
                        region: a.region.clone(),
                        negated: false,
                    })];
                    for s2 in sizes.keys().filter(|s2| **s2 != s) {
                        parts.push(Lifted::Atom(SwarmAtom {
                            swarm: *s2,
                            region: a.region.clone(),
                            negated: true,
                        }));
                    }
                    branches.push(fold_and(parts));
                }
                fold_or(branches)
            }
            Formula::And(cs) => {
                fold_and(cs.iter().map(|c| go(c, sizes)).collect::<Result<Vec<_>, _>>()?)
            }
            Formula::Or(cs) => {
                fold_or(cs.iter().map(|c| go(c, sizes)).collect::<Result<Vec<_>, _>>()?)
            }
            Formula::Always(iv, c) => {
                match go(c, sizes)? {
                    Lifted::True => Lifted::True,
                    Lifted::False => Lifted::False,
                    inner => Lifted::Always(*iv, Box::new(inner)),
                }
            }
            Formula::Eventually(iv, c) => match go(c, sizes)? {
                Lifted::True => Lifted::True,
                Lifted::False => Lifted::False,
                inner => Lifted::Eventually(*iv, Box::new(inner)),
            },
            Formula::Until(iv, l, r) => {
                let l = go(l, sizes)?;
                let r = go(r, sizes)?;
                match (&l, &r) {
                    (_, Lifted::False) | (Lifted::False, _) => Lifted::False,
                    (Lifted::True, Lifted::True) => Lifted::True,
                    _ => Lifted::Until(*iv, Box::new(l), Box::new(r)),
                }
            }
        })
    }
    let lifted = go(&to_nnf(f), sizes)?;
    if lifted == Lifted::False {
        // Find the offending atom for the error message.
        fn first_unliftable(
            f: &Formula,
            sizes: &BTreeMap<usize, usize>,
        ) -> Option<(String, usize)> {
            match f {
                Formula::Pred(a) if qualifying_swarms(sizes, a.count).is_empty() => {
                    Some((a.region.clone(), a.count))
                }
                Formula::And(cs) | Formula::Or(cs) => {
                    cs.iter().find_map(|c| first_unliftable(c, sizes))
                }
                Formula::Always(_, c) | Formula::Eventually(_, c) | Formula::Not(c) => {
                    first_unliftable(c, sizes)
                }
                Formula::Until(_, l, r) => {
                    first_unliftable(l, sizes).or_else(|| first_unliftable(r, sizes))
                }
                _ => None,
            }
        }
        let (region, required) = first_unliftable(&to_nnf(f), sizes)
            .unwrap_or_else(|| ("<unknown>".into(), 0));
        return Err(FormulaError::Unliftable { region, required });
    }
    Ok(lifted)
}

/// Exact distributions that keep temporal operators over single-swarm
/// subtrees where possible: `F (a | b) = F a | F b`, `G (a & b) = G a & G b`,
/// and `l U (a | b) = (l U a) | (l U b)`.
pub fn distribute(f: &Lifted) -> Lifted {
    match f {
        Lifted::True | Lifted::False | Lifted::Atom(_) => f.clone(),
        Lifted::And(cs) => fold_and(cs.iter().map(distribute).collect()),
        Lifted::Or(cs) => fold_or(cs.iter().map(distribute).collect()),
        Lifted::Always(iv, c) => match distribute(c) {
            Lifted::And(cs) => fold_and(
                cs.into_iter().map(|c| Lifted::Always(*iv, Box::new(c))).map(|c| distribute(&c)).collect(),
            ),
            inner => Lifted::Always(*iv, Box::new(inner)),
        },
        Lifted::Eventually(iv, c) => match distribute(c) {
            Lifted::Or(cs) => fold_or(
                cs.into_iter().map(|c| Lifted::Eventually(*iv, Box::new(c))).map(|c| distribute(&c)).collect(),
            ),
            inner => Lifted::Eventually(*iv, Box::new(inner)),
        },
        Lifted::Until(iv, l, r) => {
            let l = distribute(l);
            match distribute(r) {
                Lifted::Or(rs) => fold_or(
                    rs.into_iter()
                        .map(|r| Lifted::Until(*iv, Box::new(l.clone()), Box::new(r)))
                        .map(|c| distribute(&c))
                        .collect(),
                ),
                r => Lifted::Until(*iv, Box::new(l), Box::new(r)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_regions() -> Vec<String> {
        vec!["B".into(), "Gr".into(), "R".into()]
    }

    fn ctx<'a>(regions: &'a [String]) -> ParseContext<'a> {
        ParseContext { regions, total_agents: 5, min_swarm_size: 5 }
    }

    #[test]
    fn parses_three_conjunct_benchmark_formula() {
        let regions = ctx_regions();
        let f = parse(
            "(F[0,20] G[0,5] B{5}) & (F[0,20] G[0,5] Gr{5}) & (G[0,20] !R{1})",
            &ctx(&regions),
        )
        .unwrap();
        match &f {
            Formula::And(cs) => assert_eq!(cs.len(), 3),
            other => panic!("expected 3-conjunct And, got {other:?}"),
        }
        assert_eq!(f.conjuncts().len(), 3);
    }

    #[test]
    fn parses_true() {
        let regions = ctx_regions();
        assert_eq!(parse("True", &ctx(&regions)).unwrap(), Formula::True);
    }

    #[test]
    fn rejects_reversed_interval() {
        let regions = ctx_regions();
        let err = parse("F[3,1] B{2}", &ctx(&regions)).unwrap_err();
        assert_eq!(err, FormulaError::BadInterval(3.0, 1.0));
    }

    #[test]
    fn rejects_unknown_region_and_oversized_count() {
        let regions = ctx_regions();
        assert!(matches!(
            parse("Q{1}", &ctx(&regions)),
            Err(FormulaError::UnknownRegion(_))
        ));
        assert!(matches!(
            parse("B{6}", &ctx(&regions)),
            Err(FormulaError::CountTooLarge { .. })
        ));
    }

    #[test]
    fn omitted_count_defaults_to_min_swarm_size() {
        let regions = ctx_regions();
        let f = parse("B", &ctx(&regions)).unwrap();
        assert_eq!(f, Formula::Pred(Atom { region: "B".into(), count: 5 }));
    }

    fn atom(r: &str) -> Atom {
        Atom { region: r.into(), count: 1 }
    }

    #[test]
    fn nnf_de_morgan() {
        let f = Formula::Not(Box::new(Formula::And(vec![
            Formula::Pred(atom("B")),
            Formula::Pred(atom("Gr")),
        ])));
        assert_eq!(
            to_nnf(&f),
            Formula::Or(vec![
                Formula::NotPred(atom("B")),
                Formula::NotPred(atom("Gr"))
            ])
        );
    }

    #[test]
    fn nnf_double_negation() {
        let f = Formula::Not(Box::new(Formula::Not(Box::new(Formula::Pred(atom("B"))))));
        assert_eq!(to_nnf(&f), Formula::Pred(atom("B")));
    }

    #[test]
    fn nnf_always_dualizes_to_eventually() {
        let iv = Interval::new(0.0, 2.0).unwrap();
        let f = Formula::Not(Box::new(Formula::Always(iv, Box::new(Formula::Pred(atom("B"))))));
        assert_eq!(
            to_nnf(&f),
            Formula::Eventually(iv, Box::new(Formula::NotPred(atom("B"))))
        );
    }

    fn sizes(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn lift_positive_restricts_to_large_swarms() {
        // Enumerating swarms with >= 10 agents among sizes {1: 20, 2: 5}
        // leaves exactly swarm 1.
        let f = Formula::Pred(Atom { region: "B".into(), count: 10 });
        let l = lift(&f, &sizes(&[(1, 20), (2, 5)])).unwrap();
        assert_eq!(
            l,
            Lifted::Atom(SwarmAtom { swarm: 1, region: "B".into(), negated: false })
        );
    }

    #[test]
    fn lift_negation_with_no_small_swarm() {
        // With a single swarm of 3 agents, no swarm has fewer than 1 agent, so
        // the inside-branch list is empty and only the all-outside branch stays.
        let f = Formula::NotPred(Atom { region: "B".into(), count: 1 });
        let l = lift(&f, &sizes(&[(1, 3)])).unwrap();
        assert_eq!(
            l,
            Lifted::Atom(SwarmAtom { swarm: 1, region: "B".into(), negated: true })
        );
    }

    #[test]
    fn lift_goal_requirements_pick_cardinality_feasible_swarms() {
        let sz = sizes(&[(1, 20), (2, 5), (3, 15), (4, 30)]);
        let goal3 = Formula::Pred(Atom { region: "G3".into(), count: 25 });
        let l = lift(&goal3, &sz).unwrap();
        assert_eq!(
            l,
            Lifted::Atom(SwarmAtom { swarm: 4, region: "G3".into(), negated: false }),
            "a goal needing 25 agents lifts only to the swarm of 30"
        );
        let goal1 = Formula::Pred(Atom { region: "G1".into(), count: 20 });
        match lift(&goal1, &sz).unwrap() {
            Lifted::Or(branches) => assert_eq!(branches.len(), 2, "swarms 1 and 4 qualify"),
            other => panic!("expected 2-way disjunction, got {other:?}"),
        }
    }

    #[test]
    fn lift_error_when_no_swarm_qualifies() {
        let f = Formula::Pred(Atom { region: "B".into(), count: 50 });
        assert!(matches!(
            lift(&f, &sizes(&[(1, 20), (2, 5)])),
            Err(FormulaError::Unliftable { required: 50, .. })
        ));
    }

    #[test]
    fn lift_monotone_in_swarm_size() {
        // Enlarging a swarm never shrinks the set of qualifying swarms.
        for count in 1..=8 {
            for base in 1..=8 {
                let small = sizes(&[(1, base), (2, 4)]);
                let big = sizes(&[(1, base + 3), (2, 4)]);
                let qs = qualifying_swarms(&small, count);
                let qb = qualifying_swarms(&big, count);
                for s in &qs {
                    assert!(qb.contains(s), "count={count} base={base}");
                }
            }
        }
    }

    #[test]
    fn distribute_pushes_eventually_into_disjunction() {
        let iv = Interval::new(0.0, 10.0).unwrap();
        let a1 = Lifted::Atom(SwarmAtom { swarm: 1, region: "B".into(), negated: false });
        let a2 = Lifted::Atom(SwarmAtom { swarm: 2, region: "B".into(), negated: false });
        let f = Lifted::Eventually(iv, Box::new(Lifted::Or(vec![a1.clone(), a2.clone()])));
        let d = distribute(&f);
        assert_eq!(
            d,
            Lifted::Or(vec![
                Lifted::Eventually(iv, Box::new(a1)),
                Lifted::Eventually(iv, Box::new(a2)),
            ])
        );
    }
}
