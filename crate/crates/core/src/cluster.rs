//! Merging of dynamic cells into motion clusters and the final labeling.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::geometry::MotionBin;
use crate::grid::{CellDecision, GridGeometry, Rejection, Verdict};

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterInfo {
    pub id: usize,
    pub motion_bin: MotionBin,
    /// Indices into the decision list the map was built from.
    pub units: Vec<usize>,
    /// Grid cells touched by the cluster's units.
    pub cells: BTreeSet<usize>,
    /// Correspondence indices voting for `motion_bin`, sorted.
    pub members: Vec<usize>,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ClusterMap {
    pub clusters: Vec<ClusterInfo>,
    /// Cluster index per decision, `None` for units outside every cluster.
    pub unit_cluster: Vec<Option<usize>>,
}

impl ClusterMap {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    fn from_groups(decisions: &[CellDecision], groups: Vec<(MotionBin, Vec<usize>)>) -> Self {
        let mut unit_cluster = vec![None; decisions.len()];
        let clusters = groups
            .into_iter()
            .enumerate()
            .map(|(id, (motion_bin, units))| {
                for &u in &units {
                    unit_cluster[u] = Some(id);
                }
                let mut members: Vec<usize> =
                    units.iter().flat_map(|&u| decisions[u].winners.iter().copied()).collect();
                members.sort_unstable();
                ClusterInfo {
                    id,
                    motion_bin,
                    cells: units.iter().map(|&u| decisions[u].cell_id).collect(),
                    support: units.iter().map(|&u| decisions[u].support as u64).sum(),
                    members,
                    units,
                }
            })
            .collect();
        ClusterMap { clusters, unit_cluster }
    }

    fn rebuild(&self, decisions: &[CellDecision], keep: impl Fn(&ClusterInfo) -> bool) -> Self {
        let groups = self.clusters.iter().filter(|c| keep(c)).map(|c| (c.motion_bin, c.units.clone())).collect();
        Self::from_groups(decisions, groups)
    }
}

/// Groups dynamic units of one pass into connected clusters of equal motion
/// bin. Units are adjacent when their rectangles share an edge or a corner,
/// which for whole cells is 8-connectivity. Seeds are taken per bin in order
/// of decreasing support.
pub fn merge_clusters(decisions: &[CellDecision], geometry: &GridGeometry) -> ClusterMap {
    let mut by_bin: BTreeMap<MotionBin, Vec<usize>> = BTreeMap::new();
    for (u, d) in decisions.iter().enumerate() {
        if let Verdict::Dynamic(bin) = d.verdict {
            by_bin.entry(bin).or_default().push(u);
        }
    }

    let mut groups = Vec::new();
    for (bin, mut units) in by_bin {
        let mut in_cell: HashMap<usize, Vec<usize>> = HashMap::new();
        for &u in &units {
            in_cell.entry(decisions[u].cell_id).or_default().push(u);
        }
        units.sort_by(|&a, &b| decisions[b].support.cmp(&decisions[a].support).then(a.cmp(&b)));

        let mut visited: BTreeSet<usize> = BTreeSet::new();
        for seed in units {
            if !visited.insert(seed) {
                continue;
            }
            let mut group = vec![seed];
            let mut frontier = vec![seed];
            while let Some(u) = frontier.pop() {
                let rect = decisions[u].rect;
                for cell in geometry.neighborhood(decisions[u].cell_id) {
                    for &v in in_cell.get(&cell).into_iter().flatten() {
                        if !visited.contains(&v) && rect.touches(&decisions[v].rect) {
                            visited.insert(v);
                            group.push(v);
                            frontier.push(v);
                        }
                    }
                }
            }
            group.sort_unstable();
            groups.push((bin, group));
        }
    }
    ClusterMap::from_groups(decisions, groups)
}

/// Drops clusters with fewer than `min_cluster_features` members; their
/// units fall back to static.
pub fn eliminate_small(cm: &ClusterMap, decisions: &[CellDecision], min_cluster_features: usize) -> ClusterMap {
    cm.rebuild(decisions, |c| c.members.len() >= min_cluster_features)
}

/// Non-maximum suppression over grid cells: when several clusters claim the
/// same cell, the one with the highest support keeps it (lower id on ties)
/// and the others lose their units inside that cell.
pub fn suppress_duplicates(cm: &ClusterMap, decisions: &[CellDecision]) -> ClusterMap {
    let mut claims: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in &cm.clusters {
        for &cell in &c.cells {
            claims.entry(cell).or_default().push(c.id);
        }
    }
    let mut lost: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (cell, ids) in claims {
        if ids.len() < 2 {
            continue;
        }
        let winner = *ids
            .iter()
            .max_by(|&&a, &&b| cm.clusters[a].support.cmp(&cm.clusters[b].support).then(b.cmp(&a)))
            .expect("at least two claims");
        for id in ids.into_iter().filter(|&id| id != winner) {
            lost.entry(id).or_default().insert(cell);
        }
    }
    if lost.is_empty() {
        return cm.clone();
    }
    let groups = cm
        .clusters
        .iter()
        .filter_map(|c| {
            let units: Vec<usize> = match lost.get(&c.id) {
                Some(cells) => c.units.iter().copied().filter(|&u| !cells.contains(&decisions[u].cell_id)).collect(),
                None => c.units.clone(),
            };
            (!units.is_empty()).then_some((c.motion_bin, units))
        })
        .collect();
    ClusterMap::from_groups(decisions, groups)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Static,
    Dynamic { cluster: usize, bin: MotionBin },
    Unknown,
}

impl Label {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, Label::Dynamic { .. })
    }
}

/// Where a label came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub pass: usize,
    pub cell: usize,
    pub quad_path: Vec<u8>,
    /// Winning support over population of the deciding region.
    pub support_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelEntry {
    pub id: u64,
    pub label: Label,
    /// `None` for correspondences rejected before assignment and for labels
    /// read back from a file.
    pub provenance: Option<Provenance>,
}

/// One label per input correspondence, in input order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabelMap {
    pub entries: Vec<LabelEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LabelCounts {
    pub static_: usize,
    pub dynamic: usize,
    pub unknown: usize,
}

impl LabelMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for e in &self.entries {
            match e.label {
                Label::Static => counts.static_ += 1,
                Label::Dynamic { .. } => counts.dynamic += 1,
                Label::Unknown => counts.unknown += 1,
            }
        }
        counts
    }

    pub fn dynamic_ids(&self) -> BTreeSet<u64> {
        self.entries.iter().filter(|e| e.label.is_dynamic()).map(|e| e.id).collect()
    }

    pub fn static_indices(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].label == Label::Static).collect()
    }

    /// Cluster id -> (bin, member count), in cluster id order.
    pub fn clusters(&self) -> BTreeMap<usize, (MotionBin, usize)> {
        let mut out: BTreeMap<usize, (MotionBin, usize)> = BTreeMap::new();
        for e in &self.entries {
            if let Label::Dynamic { cluster, bin } = e.label {
                out.entry(cluster).or_insert((bin, 0)).1 += 1;
            }
        }
        out
    }
}

/// Labels of one pass. Members of surviving clusters become dynamic,
/// members of unknown regions unknown, everything else static.
pub fn label_matches(cm: &ClusterMap, decisions: &[CellDecision], ids: &[u64], rejected: &[Rejection]) -> LabelMap {
    let mut entries: Vec<LabelEntry> =
        ids.iter().map(|&id| LabelEntry { id, label: Label::Unknown, provenance: None }).collect();
    for (u, d) in decisions.iter().enumerate() {
        let provenance = Provenance {
            pass: d.pass,
            cell: d.cell_id,
            quad_path: d.quad_path.clone(),
            support_ratio: d.support_ratio(),
        };
        let base = match d.verdict {
            Verdict::Unknown => Label::Unknown,
            _ => Label::Static,
        };
        for &m in &d.members {
            entries[m].label = base;
            entries[m].provenance = Some(provenance.clone());
        }
        if let Some(cluster) = cm.unit_cluster[u] {
            let bin = cm.clusters[cluster].motion_bin;
            for &m in &d.winners {
                entries[m].label = Label::Dynamic { cluster, bin };
            }
        }
    }
    for r in rejected {
        entries[r.index].label = Label::Unknown;
        entries[r.index].provenance = None;
    }
    LabelMap { entries }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Combines the per-pass labels into one map.
///
/// Each correspondence takes the label of the pass whose deciding region has
/// the highest support ratio, ignoring passes where it was unknown; ties go
/// to static, then to the earlier pass. Clusters of different passes that
/// share a member and a motion bin become one cluster; fused clusters smaller
/// than `min_cluster_features` fall back to static.
pub fn fuse_passes(passes: &[LabelMap], min_cluster_features: usize) -> LabelMap {
    let Some(first) = passes.first() else {
        return LabelMap::default();
    };
    let n = first.len();

    // one union-find node per (pass, cluster)
    let mut offsets = Vec::with_capacity(passes.len());
    let mut total = 0;
    for p in passes {
        offsets.push(total);
        total += p.clusters().keys().next_back().map_or(0, |&k| k + 1);
    }
    let mut parent: Vec<usize> = (0..total).collect();
    let node = |pass: usize, cluster: usize| offsets[pass] + cluster;

    let rank = |label: &Label| match label {
        Label::Static => 1u8,
        Label::Dynamic { .. } => 0,
        Label::Unknown => unreachable!(),
    };

    let mut chosen: Vec<(usize, LabelEntry)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut best: Option<(usize, &LabelEntry)> = None;
        for (p, map) in passes.iter().enumerate() {
            let e = &map.entries[i];
            if e.label == Label::Unknown {
                continue;
            }
            let ratio = e.provenance.as_ref().map_or(0.0, |pv| pv.support_ratio);
            let better = match best {
                None => true,
                Some((_, b)) => {
                    let b_ratio = b.provenance.as_ref().map_or(0.0, |pv| pv.support_ratio);
                    ratio > b_ratio || (ratio == b_ratio && rank(&e.label) > rank(&b.label))
                }
            };
            if better {
                best = Some((p, e));
            }
        }
        let picked = match best {
            Some((p, e)) => (p, e.clone()),
            None => {
                let e =
                    passes.iter().map(|m| &m.entries[i]).find(|e| e.provenance.is_some()).unwrap_or(&first.entries[i]);
                (0, LabelEntry { label: Label::Unknown, ..e.clone() })
            }
        };

        // link the clusters this correspondence belongs to across passes
        if let (p, Label::Dynamic { cluster, bin }) = (picked.0, picked.1.label) {
            let root = node(p, cluster);
            for (q, map) in passes.iter().enumerate() {
                if let Label::Dynamic { cluster: c, bin: b } = map.entries[i].label {
                    if b == bin {
                        let (ra, rb) = (find(&mut parent, root), find(&mut parent, node(q, c)));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
        }
        chosen.push(picked);
    }

    // count fused members per root
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for (p, e) in &chosen {
        if let Label::Dynamic { cluster, .. } = e.label {
            *sizes.entry(find(&mut parent, node(*p, cluster))).or_default() += 1;
        }
    }

    let mut renumber: HashMap<usize, usize> = HashMap::new();
    let entries = chosen
        .into_iter()
        .map(|(p, mut e)| {
            if let Label::Dynamic { cluster, bin } = e.label {
                let root = find(&mut parent, node(p, cluster));
                e.label = if sizes[&root] >= min_cluster_features {
                    let next = renumber.len();
                    Label::Dynamic { cluster: *renumber.entry(root).or_insert(next), bin }
                } else {
                    Label::Static
                };
            }
            e
        })
        .collect();
    LabelMap { entries }
}
