//! Client data partitioning: IID, Dirichlet, and pathological splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Labeled examples identified by unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    items: Vec<(u64, u32)>,
    num_classes: u32,
}

impl LabeledDataset {
    pub fn new(items: Vec<(u64, u32)>, num_classes: u32) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        for &(id, label) in &items {
            if label >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {label} out of range for {num_classes} classes"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidArgument(format!("duplicate example id {id}")));
            }
        }
        Ok(LabeledDataset { items, num_classes })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn items(&self) -> &[(u64, u32)] {
        &self.items
    }

    pub fn label_of(&self, id: u64) -> Option<u32> {
        self.items
            .iter()
            .find(|&&(i, _)| i == id)
            .map(|&(_, label)| label)
    }

    fn ids_by_class(&self) -> Vec<Vec<u64>> {
        let mut by_class = vec![Vec::new(); self.num_classes as usize];
        for &(id, label) in &self.items {
            by_class[label as usize].push(id);
        }
        by_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionStrategy {
    Iid,
    Dirichlet { concentration: f64 },
    Pathological { classes_per_client: usize },
}

/// Assignment of example ids to clients. Lists are disjoint and cover the
/// dataset exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignments: Vec<Vec<u64>>,
    strategy: PartitionStrategy,
}

/// JSON dump shape: `{"clients": [[ids...], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PartitionDump {
    pub clients: Vec<Vec<u64>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, i: usize) -> &[u64] {
        &self.assignments[i]
    }

    pub fn assignments(&self) -> &[Vec<u64>] {
        &self.assignments
    }

    pub fn strategy(&self) -> PartitionStrategy {
        self.strategy
    }

    pub fn dump(&self) -> PartitionDump {
        PartitionDump {
            clients: self.assignments.clone(),
        }
    }

    /// Per-client label histograms (`m x num_classes`).
    pub fn class_histograms(&self, ds: &LabeledDataset) -> Vec<Vec<u64>> {
        let mut label_of = std::collections::HashMap::with_capacity(ds.len());
        for &(id, label) in ds.items() {
            label_of.insert(id, label);
        }
        self.assignments
            .iter()
            .map(|ids| {
                let mut hist = vec![0u64; ds.num_classes() as usize];
                for id in ids {
                    hist[label_of[id] as usize] += 1;
                }
                hist
            })
            .collect()
    }
}

/// Gini coefficient of a count histogram; 0 for perfectly even, approaching
/// 1 as mass concentrates.
pub fn gini(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 || hist.is_empty() {
        return 0.0;
    }
    let mut abs_diff_sum = 0.0;
    for &a in hist {
        for &b in hist {
            abs_diff_sum += (a as f64 - b as f64).abs();
        }
    }
    abs_diff_sum / (2.0 * hist.len() as f64 * total as f64)
}

/// Mean Gini of the per-client class histograms; the heterogeneity measure
/// compared across partition strategies.
pub fn mean_client_gini(partition: &Partition, ds: &LabeledDataset) -> f64 {
    let hists = partition.class_histograms(ds);
    if hists.is_empty() {
        return 0.0;
    }
    hists.iter().map(|h| gini(h)).sum::<f64>() / hists.len() as f64
}

fn check_clients(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    Ok(())
}

/// Move single examples from the largest client onto empty ones so the
/// federation loop stays total; impossible only when the dataset has fewer
/// examples than clients.
fn repair_empty_clients(assignments: &mut [Vec<u64>]) {
    loop {
        let Some(empty) = assignments.iter().position(|a| a.is_empty()) else {
            return;
        };
        let Some(largest) = assignments
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| a.len().cmp(&b.len()).then(bi.cmp(ai)))
            .map(|(i, _)| i)
        else {
            return;
        };
        if assignments[largest].len() <= 1 {
            return; // nothing left to move without emptying the donor
        }
        let moved = assignments[largest].pop().expect("nonempty donor");
        assignments[empty].push(moved);
    }
}

/// Uniform split: a random permutation divided into `m` contiguous chunks
/// whose sizes differ by at most one.
pub fn split_iid(ds: &LabeledDataset, m: usize, rng: &mut DetRng) -> Result<Partition> {
    check_clients(m)?;
    let mut ids: Vec<u64> = ds.items().iter().map(|&(id, _)| id).collect();
    rng.shuffle(&mut ids);
    let base = ids.len() / m;
    let remainder = ids.len() % m;
    let mut assignments = Vec::with_capacity(m);
    let mut cursor = 0;
    for client in 0..m {
        let take = base + usize::from(client < remainder);
        assignments.push(ids[cursor..cursor + take].to_vec());
        cursor += take;
    }
    Ok(Partition {
        assignments,
        strategy: PartitionStrategy::Iid,
    })
}

/// Label-skewed split: for each class, client shares are drawn from a
/// symmetric Dirichlet and example counts follow largest-remainder rounding,
/// so every example lands somewhere. Small concentrations produce strongly
/// heterogeneous clients; large ones approach the uniform split.
pub fn split_dirichlet(
    ds: &LabeledDataset,
    m: usize,
    concentration: f64,
    rng: &mut DetRng,
) -> Result<Partition> {
    check_clients(m)?;
    if !(concentration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dirichlet concentration must be > 0, got {concentration}"
        )));
    }
    let mut assignments = vec![Vec::new(); m];
    for mut class_ids in ds.ids_by_class() {
        if class_ids.is_empty() {
            continue;
        }
        rng.shuffle(&mut class_ids);
        let shares = rng.next_dirichlet_f64(concentration, m);
        let counts = largest_remainder_counts(&shares, class_ids.len());
        let mut cursor = 0;
        for (client, &count) in counts.iter().enumerate() {
            assignments[client].extend_from_slice(&class_ids[cursor..cursor + count]);
            cursor += count;
        }
    }
    if !ds.is_empty() {
        repair_empty_clients(&mut assignments);
    }
    Ok(Partition {
        assignments,
        strategy: PartitionStrategy::Dirichlet { concentration },
    })
}

fn largest_remainder_counts(shares: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = shares
        .iter()
        .map(|&s| (s * total as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut leftovers: Vec<(usize, f64)> = shares
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, s * total as f64 - counts[i] as f64))
        .collect();
    // Largest fractional remainder first; ties go to the lower client index.
    leftovers.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
    for k in 0..total.saturating_sub(assigned) {
        counts[leftovers[k % leftovers.len()].0] += 1;
    }
    counts
}

/// Label-sharded split: client `i` holds classes `(i*cpc + j) mod C`, so
/// each client sees exactly `classes_per_client` distinct labels when the
/// shard supply covers all classes; each class's examples are divided evenly
/// among its holders. Classes beyond `m * cpc` (under-supplied shards) are
/// dealt round-robin to keep the cover exact.
pub fn split_pathological(
    ds: &LabeledDataset,
    m: usize,
    classes_per_client: usize,
    rng: &mut DetRng,
) -> Result<Partition> {
    check_clients(m)?;
    let num_classes = ds.num_classes() as usize;
    if classes_per_client == 0 || classes_per_client > num_classes {
        return Err(Error::InvalidArgument(format!(
            "classes_per_client must lie in [1, {num_classes}], got {classes_per_client}"
        )));
    }
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for client in 0..m {
        for j in 0..classes_per_client {
            let class = (client * classes_per_client + j) % num_classes;
            if !holders[class].contains(&client) {
                holders[class].push(client);
            }
        }
    }
    for (class, h) in holders.iter_mut().enumerate() {
        if h.is_empty() {
            h.push(class % m);
        }
    }

    let mut assignments = vec![Vec::new(); m];
    for (class, mut class_ids) in ds.ids_by_class().into_iter().enumerate() {
        if class_ids.is_empty() {
            continue;
        }
        rng.shuffle(&mut class_ids);
        let owners = &holders[class];
        let base = class_ids.len() / owners.len();
        let remainder = class_ids.len() % owners.len();
        let mut cursor = 0;
        for (slot, &client) in owners.iter().enumerate() {
            let take = base + usize::from(slot < remainder);
            assignments[client].extend_from_slice(&class_ids[cursor..cursor + take]);
            cursor += take;
        }
    }
    if !ds.is_empty() {
        repair_empty_clients(&mut assignments);
    }
    Ok(Partition {
        assignments,
        strategy: PartitionStrategy::Pathological { classes_per_client },
    })
}
