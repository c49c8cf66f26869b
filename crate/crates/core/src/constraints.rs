//! Constraints, constraint sets and their algebra.
//!
//! A constraint set is stored as a sum of products: each product is a list of
//! factors, each factor a list of alternative entries, and the product stands
//! for the `∪×` of its factors. Typing `P | Q` multiplies factors instead of
//! materializing every combination, which keeps sets generated by many
//! parallel sessions linear in size.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::term::{Atom, Term};
use crate::types::{branches, expand_env, rename_env, Type, TypeEnv};

/// An indistinguishability constraint `M ~ N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub left: Term,
    pub right: Term,
}

impl Constraint {
    /// Builds `left ~ right`.
    pub fn new(left: Term, right: Term) -> Self {
        Constraint { left, right }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ {}", self.left, self.right)
    }
}

/// A set of constraints.
pub type Constraints = BTreeSet<Constraint>;

/// Writes a constraint set as `{M ~ N; ...}`.
pub fn fmt_constraints(c: &Constraints) -> String {
    let items: Vec<String> = c.iter().map(Constraint::to_string).collect();
    format!("{{{}}}", items.join("; "))
}

/// One element `(c, Γ)` of a constraint set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintEntry {
    pub constraints: Constraints,
    pub env: TypeEnv,
}

impl ConstraintEntry {
    /// Builds an entry.
    pub fn new(constraints: Constraints, env: TypeEnv) -> Self {
        ConstraintEntry { constraints, env }
    }

    /// The environment restricted to process variables.
    pub fn var_env(&self) -> TypeEnv {
        TypeEnv::from_pairs(
            self.env
                .iter()
                .filter(|(a, _)| a.is_var())
                .map(|(a, t)| (a.clone(), t.clone())),
        )
    }

    /// Renames the entry for session `i`.
    pub fn rename(&self, i: u32) -> ConstraintEntry {
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                Constraint::new(
                    rename_term(&c.left, i, &self.env),
                    rename_term(&c.right, i, &self.env),
                )
            })
            .collect();
        ConstraintEntry {
            constraints,
            env: rename_env(&self.env, i),
        }
    }
}

impl fmt::Display for ConstraintEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | Γ = {}",
            fmt_constraints(&self.constraints),
            self.var_env()
        )
    }
}

/// Renames a term for session `i`: variables and nonces of infinite
/// multiplicity in `env` receive index `i`.
pub fn rename_term(t: &Term, i: u32, env: &TypeEnv) -> Term {
    t.map_atoms(&mut |a| {
        let inf = env
            .nonce_type(a)
            .is_some_and(|nt| nt.mult == crate::types::Mult::Inf);
        if a.is_var() || inf {
            Term::Atom(a.with_index(Some(i)))
        } else {
            Term::Atom(a.clone())
        }
    })
}

/// A product of factors; each factor is a set of alternatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Product {
    factors: Vec<Arc<Vec<ConstraintEntry>>>,
}

impl Product {
    /// The factors of the product.
    pub fn factors(&self) -> impl Iterator<Item = &[ConstraintEntry]> {
        self.factors.iter().map(|f| f.as_slice())
    }

    /// Number of combinations, ignoring environment compatibility.
    pub fn combinations(&self) -> u128 {
        self.factors.iter().map(|f| f.len() as u128).product()
    }

    fn normalize(mut self) -> Option<Product> {
        if self.factors.iter().any(|f| f.is_empty()) {
            return None;
        }
        let (singles, mut multi): (Vec<_>, Vec<_>) =
            self.factors.drain(..).partition(|f| f.len() == 1);
        if !singles.is_empty() {
            let mut it = singles.into_iter();
            let mut acc = it.next().expect("nonempty")[0].clone();
            for f in it {
                let e = &f[0];
                if !acc.env.compatible(&e.env) {
                    return None;
                }
                acc.constraints.extend(e.constraints.iter().cloned());
                acc.env = acc.env.merge(&e.env);
            }
            multi.insert(0, Arc::new(vec![acc]));
        }
        Some(Product { factors: multi })
    }
}

/// Unions with at most this many entries are stored as one factor.
const FLATTEN_LIMIT: u128 = 512;

/// A constraint set `C`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    products: Vec<Product>,
}

impl ConstraintSet {
    /// The empty set.
    pub fn empty() -> Self {
        Self::default()
    }

    /// The set `{(c, Γ)}`.
    pub fn single(entry: ConstraintEntry) -> Self {
        ConstraintSet {
            products: vec![Product {
                factors: vec![Arc::new(vec![entry])],
            }],
        }
    }

    /// The set with the given entries.
    pub fn from_entries(entries: Vec<ConstraintEntry>) -> Self {
        if entries.is_empty() {
            return Self::empty();
        }
        ConstraintSet {
            products: vec![Product {
                factors: vec![Arc::new(entries)],
            }],
        }
    }

    /// The products of the factored representation.
    pub fn products(&self) -> &[Product] {
        &self.products
    }

    /// True when there is no entry.
    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    /// Number of entries, counting every combination of a product.
    pub fn entry_count(&self) -> u128 {
        self.products.iter().map(Product::combinations).sum()
    }

    /// Total number of constraints over the stored (unmultiplied) entries.
    pub fn stored_constraint_count(&self) -> usize {
        self.products
            .iter()
            .flat_map(|p| p.factors.iter())
            .flat_map(|f| f.iter())
            .map(|e| e.constraints.len())
            .sum()
    }

    /// `C ∪ C'`. Small results are materialized into a single factor so
    /// that products stay few under `∪×`.
    pub fn union(mut self, other: ConstraintSet) -> ConstraintSet {
        self.products.extend(other.products);
        if self.products.len() > 1 && self.entry_count() <= FLATTEN_LIMIT {
            return ConstraintSet::from_entries(self.entries());
        }
        self
    }

    /// `C ∪∀ c`: adds `c` to every entry.
    pub fn union_forall(mut self, c: &Constraints) -> ConstraintSet {
        if c.is_empty() {
            return self;
        }
        for p in &mut self.products {
            let first = Arc::make_mut(&mut p.factors[0]);
            for e in first.iter_mut() {
                e.constraints.extend(c.iter().cloned());
            }
        }
        self
    }

    /// `C ∪× C'`: combines entries with compatible environments.
    pub fn union_times(&self, other: &ConstraintSet) -> ConstraintSet {
        let mut products = Vec::new();
        for p in &self.products {
            for q in &other.products {
                let mut factors = p.factors.clone();
                factors.extend(q.factors.iter().cloned());
                if let Some(prod) = (Product { factors }).normalize() {
                    products.push(prod);
                }
            }
        }
        ConstraintSet { products }
    }

    /// Materializes every entry, dropping combinations with incompatible
    /// environments.
    pub fn entries(&self) -> Vec<ConstraintEntry> {
        let mut out = Vec::new();
        for p in &self.products {
            let mut acc = vec![ConstraintEntry::new(Constraints::new(), TypeEnv::new())];
            for f in &p.factors {
                let mut next = Vec::new();
                for a in &acc {
                    for e in f.iter() {
                        if a.env.compatible(&e.env) {
                            let mut c = a.constraints.clone();
                            c.extend(e.constraints.iter().cloned());
                            next.push(ConstraintEntry::new(c, a.env.merge(&e.env)));
                        }
                    }
                }
                acc = next;
            }
            out.extend(acc);
        }
        out
    }

    /// Applies `f` to every stored entry.
    pub fn map_entries(
        &self,
        f: &impl Fn(&ConstraintEntry) -> Vec<ConstraintEntry>,
    ) -> ConstraintSet {
        let products = self
            .products
            .iter()
            .filter_map(|p| {
                let factors = p
                    .factors
                    .iter()
                    .map(|fac| Arc::new(fac.iter().flat_map(f).collect::<Vec<_>>()))
                    .collect();
                Product { factors }.normalize()
            })
            .collect();
        ConstraintSet { products }
    }

    /// `[C]_i`: the renaming of every entry for session `i`.
    pub fn expand(&self, i: u32) -> ConstraintSet {
        self.map_entries(&|e| vec![e.rename(i)])
    }

    /// `[C]_i^n`: renaming for session `i`, then expansion of the stored types
    /// to `n` sessions and enumeration of branches.
    pub fn expand_n(&self, i: u32, n: u32) -> ConstraintSet {
        self.map_entries(&|e| {
            let renamed = e.rename(i).constraints;
            branches(&expand_env(&e.env, i, n))
                .into_iter()
                .map(|env| ConstraintEntry::new(renamed.clone(), env))
                .collect()
        })
    }

    /// Writes one line per entry, or one block per factor for sets whose
    /// materialization would exceed `limit` entries.
    pub fn dump(&self, limit: u128) -> String {
        let mut out = String::new();
        if self.entry_count() <= limit {
            for e in self.entries() {
                out.push_str(&e.to_string());
                out.push('\n');
            }
            return out;
        }
        for (i, p) in self.products.iter().enumerate() {
            for (j, f) in p.factors.iter().enumerate() {
                out.push_str(&format!(
                    "# product {} factor {} ({} alternatives)\n",
                    i + 1,
                    j + 1,
                    f.len()
                ));
                for e in f.iter() {
                    out.push_str(&e.to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// `C ∪× C'`.
pub fn union_times(a: &ConstraintSet, b: &ConstraintSet) -> ConstraintSet {
    a.union_times(b)
}

/// `C ∪∀ c`.
pub fn union_forall(a: ConstraintSet, c: &Constraints) -> ConstraintSet {
    a.union_forall(c)
}

/// `[C]_i`.
pub fn expand_constraints(c: &ConstraintSet, i: u32) -> ConstraintSet {
    c.expand(i)
}

/// `[C]_i^n`.
pub fn expand_constraints_n(c: &ConstraintSet, i: u32, n: u32) -> ConstraintSet {
    c.expand_n(i, n)
}

/// The attacker's initial knowledge for an environment: LL keys, public and
/// verification keys of every key, and LL nonces, in declaration order.
pub fn attacker_knowledge(env: &TypeEnv) -> Vec<Term> {
    let mut out = Vec::new();
    for (a, t) in env.iter() {
        if a.is_key() {
            if matches!(t, Type::Key(crate::types::Label::LL, _)) {
                out.push(Term::Atom(a.clone()));
            }
            out.push(Term::pk(a.clone().into()));
            out.push(Term::vk(a.clone().into()));
        } else if env
            .nonce_type(a)
            .is_some_and(|nt| nt.label == crate::types::Label::LL)
        {
            out.push(Term::Atom(a.clone()));
        }
    }
    out
}

/// The variables occurring in a constraint set.
pub fn constraint_vars(c: &Constraints) -> BTreeSet<Atom> {
    let mut out = BTreeSet::new();
    for k in c {
        out.extend(k.left.vars());
        out.extend(k.right.vars());
    }
    out
}
