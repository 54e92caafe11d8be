//! Embedding order on configurations, truncations and canonical keys.
//!
//! C ⊑ C′ holds when some injection ρ on data satisfies C(d) ≤ C′(ρ(d)) for
//! every datum; C ≡ C′ is mutual embedding, which coincides with equality of
//! the multisets of forms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::matching::saturates_left;
use crate::model::{Configuration, DatumId, Form, StateId};

/// Renaming-invariant key of a configuration: its multiset of forms.
///
/// Stored as a flat word vector `[mult, len, (state, count)*len]*` with forms
/// in ascending order, which keeps large state spaces compact.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(Box<[u32]>);

impl CanonicalKey {
    /// Sorted (form, multiplicity) pairs.
    pub fn forms(&self) -> Vec<(Form, u32)> {
        let mut out = Vec::new();
        let w = &self.0;
        let mut i = 0;
        while i < w.len() {
            let mult = w[i];
            let len = w[i + 1] as usize;
            let f = Form::from_counts((0..len).map(|k| (StateId(w[i + 2 + 2 * k]), w[i + 3 + 2 * k])));
            out.push((f, mult));
            i += 2 + 2 * len;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The configuration assigning data 0, 1, ... to forms in key order.
    pub fn representative(&self) -> Configuration {
        let mut c = Configuration::new();
        let mut next = 0u32;
        for (f, mult) in self.forms() {
            for _ in 0..mult {
                c.add_form(DatumId(next), &f);
                next += 1;
            }
        }
        c
    }

    pub fn num_agents(&self) -> u64 {
        self.forms().iter().map(|(f, m)| f.total() * *m as u64).sum()
    }
}

impl fmt::Debug for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (form, m)) in self.forms().iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{form}")?;
            if *m > 1 {
                write!(f, "*{m}")?;
            }
        }
        write!(f, "]")
    }
}

#[derive(Serialize, Deserialize)]
struct KeyRepr(Vec<(Vec<(u32, u32)>, u32)>);

impl Serialize for CanonicalKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KeyRepr(
            self.forms()
                .into_iter()
                .map(|(f, m)| (f.iter().map(|(q, n)| (q.0, n)).collect(), m))
                .collect(),
        )
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CanonicalKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = KeyRepr::deserialize(d)?;
        let mut c = Configuration::new();
        let mut next = 0;
        for (f, m) in repr.0 {
            let form = Form::from_counts(f.into_iter().map(|(q, n)| (StateId(q), n)));
            for _ in 0..m {
                c.add_form(DatumId(next), &form);
                next += 1;
            }
        }
        Ok(canonical(&c))
    }
}

/// Canonical key of `c`; equal keys iff the configurations are equivalent.
pub fn canonical(c: &Configuration) -> CanonicalKey {
    let mut forms: Vec<&Form> = c.forms().map(|(_, f)| f).collect();
    forms.sort_unstable();
    let mut words = Vec::with_capacity(forms.len() * 4);
    let mut i = 0;
    while i < forms.len() {
        let mut j = i + 1;
        while j < forms.len() && forms[j] == forms[i] {
            j += 1;
        }
        words.push((j - i) as u32);
        words.push(forms[i].num_entries() as u32);
        for (q, n) in forms[i].iter() {
            words.push(q.0);
            words.push(n);
        }
        i = j;
    }
    CanonicalKey(words.into_boxed_slice())
}

/// C ⊑ C′, decided by matching supp(a) into supp(b).
pub fn embeds(a: &Configuration, b: &Configuration) -> bool {
    let targets: Vec<&Form> = b.forms().map(|(_, f)| f).collect();
    let adj: Vec<Vec<usize>> = a
        .forms()
        .map(|(_, f)| {
            targets
                .iter()
                .enumerate()
                .filter(|(_, g)| f.le(g))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    saturates_left(&adj, targets.len())
}

/// C ≡ C′.
pub fn equiv(a: &Configuration, b: &Configuration) -> bool {
    canonical(a) == canonical(b)
}

/// State truncation τ_k: caps every (datum, state) count at `k`.
pub fn tau_k(c: &Configuration, k: u32) -> Configuration {
    assert!(k >= 1, "truncation threshold must be positive");
    Configuration::from_forms(c.forms().map(|(d, f)| (d, f.truncate(k))))
}

/// #_f(C): the number of data whose form is exactly `f`.
pub fn form_count(c: &Configuration, f: &Form) -> u64 {
    if f.is_zero() {
        return 0;
    }
    c.forms().filter(|(_, g)| *g == f).count() as u64
}

/// Per-form cap on the number of data kept by [`sigma`].
pub struct FormThreshold(Box<dyn Fn(&Form) -> u64 + Send + Sync>);

impl FormThreshold {
    pub fn constant(h: u64) -> Self {
        FormThreshold(Box::new(move |_| h))
    }

    pub fn from_fn<F: Fn(&Form) -> u64 + Send + Sync + 'static>(f: F) -> Self {
        FormThreshold(Box::new(f))
    }

    pub fn get(&self, f: &Form) -> u64 {
        (self.0)(f)
    }
}

/// Form truncation σ: keeps, for every form f, the min(#_f(C), h(f)) data
/// with the smallest ids.
pub fn sigma(c: &Configuration, h: &FormThreshold) -> Configuration {
    let mut kept: BTreeMap<&Form, u64> = BTreeMap::new();
    let mut out = Configuration::new();
    for (d, f) in c.forms() {
        let n = kept.entry(f).or_insert(0);
        if *n < h.get(f) {
            *n += 1;
            out.add_form(d, f);
        }
    }
    out
}
