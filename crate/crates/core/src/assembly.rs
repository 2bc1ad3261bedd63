//! Test forms drawn from a calibrated item bank.
//!
//! Items are ranked by difficulty and median-split into an easy and a
//! difficult stratum; forms are uniform samples without replacement from a
//! stratum, disjoint across one call.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::irt::FittedModel;
use crate::rng::{self, RNG_NAME};
use crate::schema::{self, BANK_SCHEMA, SUBSET_SCHEMA};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankItem {
    pub item_id: String,
    pub difficulty_beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triad_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    /// Identifier of the model the difficulties came from.
    pub provenance: String,
    pub items: Vec<BankItem>,
}

impl ItemBank {
    pub fn new(provenance: impl Into<String>, items: Vec<BankItem>) -> Result<Self> {
        let mut seen = HashSet::new();
        for it in &items {
            if !seen.insert(it.item_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate item id `{}` in bank", it.item_id)));
            }
            if !it.difficulty_beta.is_finite() {
                return Err(Error::InvalidInput(format!("item `{}` has a non-finite difficulty", it.item_id)));
            }
        }
        Ok(Self {
            provenance: provenance.into(),
            items,
        })
    }

    pub fn from_model(model: &FittedModel, provenance: impl Into<String>) -> Result<Self> {
        let items = model
            .items
            .iter()
            .map(|it| BankItem {
                item_id: it.item_id.clone(),
                difficulty_beta: it.difficulty,
                a: Some(it.discrimination),
                c: Some(it.guessing),
                boundary: it.boundary,
                triad_id: Some(it.item_id.clone()),
            })
            .collect();
        Self::new(provenance, items)
    }

    /// Bank with the given betas and ids `i001`, `i002`, ...
    pub fn from_betas(provenance: impl Into<String>, betas: &[f64]) -> Result<Self> {
        let width = betas.len().to_string().len().max(3);
        let items = betas
            .iter()
            .enumerate()
            .map(|(k, &b)| BankItem {
                item_id: format!("i{:0width$}", k + 1),
                difficulty_beta: b,
                a: None,
                c: None,
                boundary: false,
                triad_id: None,
            })
            .collect();
        Self::new(provenance, items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.difficulty_beta).collect()
    }

    /// SHA-256 of the bank's canonical JSON.
    pub fn content_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("bank serializes"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        schema::write_document(path, BANK_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bank: Self = schema::read_document(path, BANK_SCHEMA)?;
        Self::new(bank.provenance, bank.items)
    }

    fn ranked(&self) -> Vec<BankItem> {
        let mut items = self.items.clone();
        items.sort_by(|a, b| a.difficulty_beta.total_cmp(&b.difficulty_beta).then_with(|| a.item_id.cmp(&b.item_id)));
        items
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stratum {
    Easy,
    Difficult,
    FullRange,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Easy => "EASY",
            Stratum::Difficult => "DIFFICULT",
            Stratum::FullRange => "FULL_RANGE",
        })
    }
}

impl std::str::FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "EASY" => Ok(Stratum::Easy),
            "DIFFICULT" | "HARD" => Ok(Stratum::Difficult),
            "FULL_RANGE" | "FULL" => Ok(Stratum::FullRange),
            other => Err(Error::InvalidInput(format!("unknown stratum `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub name: String,
    pub size: usize,
    pub stratum: Stratum,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub easy: ItemBank,
    pub difficult: ItemBank,
    /// Every item has the same difficulty; the split fell back to item-id order.
    pub degenerate: bool,
}

/// Easier half below the median; with an odd count the median item goes to the difficult half.
pub fn median_split(bank: &ItemBank) -> Result<MedianSplit> {
    if bank.len() < 2 {
        return Err(Error::InvalidInput(format!("median split needs at least 2 items, got {}", bank.len())));
    }
    let ranked = bank.ranked();
    let degenerate = ranked.first().map(|i| i.difficulty_beta) == ranked.last().map(|i| i.difficulty_beta);
    if degenerate {
        warn!("all items share one difficulty; median split follows item id order");
    }
    let cut = ranked.len() / 2;
    let (easy, difficult) = ranked.split_at(cut);
    Ok(MedianSplit {
        easy: ItemBank::new(bank.provenance.clone(), easy.to_vec())?,
        difficult: ItemBank::new(bank.provenance.clone(), difficult.to_vec())?,
        degenerate,
    })
}

fn draw(pool: &[BankItem], taken: &HashSet<String>, size: usize, seed: u64, stratum: Stratum) -> Result<Vec<BankItem>> {
    let mut available: Vec<&BankItem> = pool.iter().filter(|i| !taken.contains(&i.item_id)).collect();
    available.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    if available.len() < size {
        return Err(Error::OverRequest {
            stratum: stratum.to_string(),
            deficit: size - available.len(),
        });
    }
    let mut rng = rng::seeded(seed);
    Ok(index::sample(&mut rng, available.len(), size).into_iter().map(|k| available[k].clone()).collect())
}

/// Draws pairwise-disjoint subsets, in spec order, each seeded by its own spec.
pub fn sample_subsets(bank: &ItemBank, specs: &[SubsetSpec]) -> Result<Vec<ItemBank>> {
    let split = median_split(bank)?;
    for stratum in [Stratum::Easy, Stratum::Difficult, Stratum::FullRange] {
        let requested: usize = specs.iter().filter(|s| s.stratum == stratum).map(|s| s.size).sum();
        let capacity = match stratum {
            Stratum::Easy => split.easy.len(),
            Stratum::Difficult => split.difficult.len(),
            Stratum::FullRange => bank.len(),
        };
        if requested > capacity {
            return Err(Error::OverRequest {
                stratum: stratum.to_string(),
                deficit: requested - capacity,
            });
        }
    }
    let mut taken = HashSet::new();
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        if spec.size == 0 {
            return Err(Error::InvalidInput(format!("subset `{}` has size 0", spec.name)));
        }
        let pool = match spec.stratum {
            Stratum::Easy => &split.easy.items,
            Stratum::Difficult => &split.difficult.items,
            Stratum::FullRange => &bank.items,
        };
        let items = draw(pool, &taken, spec.size, spec.seed, spec.stratum)?;
        taken.extend(items.iter().map(|i| i.item_id.clone()));
        out.push(ItemBank::new(bank.provenance.clone(), items)?);
    }
    Ok(out)
}

/// Union of two disjoint subsets, `a`'s items first.
pub fn combine_subsets(a: &ItemBank, b: &ItemBank) -> Result<ItemBank> {
    let ids: HashSet<&str> = a.items.iter().map(|i| i.item_id.as_str()).collect();
    let shared: Vec<String> = b.items.iter().filter(|i| ids.contains(i.item_id.as_str())).map(|i| i.item_id.clone()).collect();
    if !shared.is_empty() {
        return Err(Error::Overlap(shared));
    }
    let provenance = if a.is_empty() { b.provenance.clone() } else { a.provenance.clone() };
    ItemBank::new(provenance, a.items.iter().chain(&b.items).cloned().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPair {
    pub first: ItemBank,
    pub second: ItemBank,
}

/// Drops the `drop_easiest` lowest-difficulty items, then draws two disjoint subsets.
pub fn trim_and_sample_pair(bank: &ItemBank, drop_easiest: usize, subset_size: usize, seed: u64) -> Result<SubsetPair> {
    let needed = drop_easiest + 2 * subset_size;
    if bank.len() < needed || subset_size == 0 {
        return Err(Error::OverRequest {
            stratum: Stratum::FullRange.to_string(),
            deficit: needed.saturating_sub(bank.len()).max(usize::from(subset_size == 0)),
        });
    }
    let remaining = ItemBank::new(bank.provenance.clone(), bank.ranked()[drop_easiest..].to_vec())?;
    let specs = [
        SubsetSpec {
            name: "subset1".into(),
            size: subset_size,
            stratum: Stratum::FullRange,
            seed: rng::derive_seed(seed, 0),
        },
        SubsetSpec {
            name: "subset2".into(),
            size: subset_size,
            stratum: Stratum::FullRange,
            seed: rng::derive_seed(seed, 1),
        },
    ];
    let mut drawn = sample_subsets(&remaining, &specs)?.into_iter();
    Ok(SubsetPair {
        first: drawn.next().expect("two subsets"),
        second: drawn.next().expect("two subsets"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub n: usize,
    pub mean_beta: f64,
    /// Sample SD (n - 1 denominator); 0 for a single item.
    pub sd_beta: f64,
    pub median_beta: f64,
    /// False when `n == 1` and the SD is undefined.
    pub sd_defined: bool,
}

pub fn subset_stats(subset: &ItemBank) -> Result<SubsetStats> {
    if subset.is_empty() {
        return Err(Error::InvalidInput("subset is empty".into()));
    }
    let mut betas = subset.betas();
    betas.sort_by(f64::total_cmp);
    let n = betas.len();
    let mean = betas.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        betas[n / 2]
    } else {
        0.5 * (betas[n / 2 - 1] + betas[n / 2])
    };
    let (sd, sd_defined) = if n > 1 {
        let ss: f64 = betas.iter().map(|b| (b - mean) * (b - mean)).sum();
        ((ss / (n - 1) as f64).sqrt(), true)
    } else {
        (0.0, false)
    };
    Ok(SubsetStats {
        n,
        mean_beta: mean,
        sd_beta: sd,
        median_beta: median,
        sd_defined,
    })
}

/// A drawn form together with the information needed to redraw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub name: String,
    pub stratum: Stratum,
    pub seed: u64,
    pub rng: String,
    pub source_bank_hash: String,
    #[serde(flatten)]
    pub bank: ItemBank,
}

impl SubsetManifest {
    pub fn new(spec: &SubsetSpec, source: &ItemBank, subset: ItemBank) -> Self {
        Self {
            name: spec.name.clone(),
            stratum: spec.stratum,
            seed: spec.seed,
            rng: RNG_NAME.to_string(),
            source_bank_hash: source.content_hash(),
            bank: subset,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        schema::to_document(SUBSET_SCHEMA, self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        schema::write_document(path, SUBSET_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        schema::read_document(path, SUBSET_SCHEMA)
    }
}

/// Parses plans such as `3xEASY:36,3xDIFFICULT:36` into specs named `E1..`, `D1..`, `F1..`,
/// each seeded from `seed` by its position in the plan.
pub fn parse_plan(plan: &str, seed: u64) -> Result<Vec<SubsetSpec>> {
    let mut specs = Vec::new();
    let mut counters = [0usize; 3];
    for part in plan.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::InvalidInput(format!("bad plan entry `{part}` (expected e.g. 3xEASY:36)"));
        let (count, rest) = match part.split_once(['x', 'X']) {
            Some((n, rest)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => (n.parse::<usize>().map_err(|_| bad())?, rest),
            _ => (1, part),
        };
        let (stratum, size) = rest.split_once(':').ok_or_else(bad)?;
        let stratum: Stratum = stratum.parse()?;
        let size: usize = size.parse().map_err(|_| bad())?;
        let (slot, prefix) = match stratum {
            Stratum::Easy => (0, "E"),
            Stratum::Difficult => (1, "D"),
            Stratum::FullRange => (2, "F"),
        };
        for _ in 0..count {
            counters[slot] += 1;
            let index = specs.len() as u64;
            specs.push(SubsetSpec {
                name: format!("{prefix}{}", counters[slot]),
                size,
                stratum,
                seed: rng::derive_seed(seed, index),
            });
        }
    }
    if specs.is_empty() {
        return Err(Error::InvalidInput("empty subset plan".into()));
    }
    Ok(specs)
}
