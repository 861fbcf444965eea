//! Union graph over duplicate pairs, its components and the removal list.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compare::DuplicatePair;
use crate::error::{Error, IoContext, Result};

/// Disjoint sets over the doc_ids seen in pairs, renumbered densely.
#[derive(Debug, Default, Clone)]
pub struct UnionFind {
    index: HashMap<u64, u32>,
    ids: Vec<u64>,
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn slot(&mut self, doc_id: u64) -> u32 {
        if let Some(&i) = self.index.get(&doc_id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.index.insert(doc_id, i);
        self.ids.push(doc_id);
        self.parent.push(i);
        self.rank.push(0);
        i
    }

    fn find_slot(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Root doc_id of the set holding `doc_id`, if it was ever seen.
    pub fn find(&mut self, doc_id: u64) -> Option<u64> {
        let slot = *self.index.get(&doc_id)?;
        let root = self.find_slot(slot);
        Some(self.ids[root as usize])
    }

    pub fn union(&mut self, a: u64, b: u64) {
        let (sa, sb) = (self.slot(a), self.slot(b));
        let (ra, rb) = (self.find_slot(sa), self.find_slot(sb));
        if ra == rb {
            return;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
    }
}

/// Builds the union graph; repeated and reordered pairs change nothing.
pub fn union_pairs<I>(pairs: I) -> UnionFind
where
    I: IntoIterator<Item = DuplicatePair>,
{
    let mut uf = UnionFind::new();
    for p in pairs {
        uf.union(p.lo, p.hi);
    }
    uf
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub representative: u64,
    pub members: Vec<u64>,
}

/// Connected components with two or more members, sorted by representative.
pub fn components(uf: &mut UnionFind) -> Vec<DuplicateGroup> {
    let mut by_root: HashMap<u32, Vec<u64>> = HashMap::new();
    for slot in 0..uf.ids.len() as u32 {
        let root = uf.find_slot(slot);
        by_root.entry(root).or_default().push(uf.ids[slot as usize]);
    }
    let mut groups: Vec<DuplicateGroup> = by_root
        .into_values()
        .filter(|m| m.len() >= 2)
        .map(|mut members| {
            members.sort_unstable();
            DuplicateGroup {
                representative: members[0],
                members,
            }
        })
        .collect();
    groups.sort_unstable_by_key(|g| g.representative);
    groups
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCounters {
    pub docs_scanned: u64,
    pub docs_kept: u64,
    pub distinct_pairs: u64,
    pub groups: u64,
    pub near_duplicates: u64,
    pub removed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub groups: Vec<DuplicateGroup>,
    /// Every doc_id belonging to a group, ascending.
    pub near_duplicate_set: Vec<u64>,
    /// Near duplicates that are not representatives, ascending.
    pub removal: Vec<u64>,
    pub total_docs: u64,
    pub counters: DedupCounters,
}

impl DedupReport {
    /// Share of the corpus that has at least one near duplicate.
    pub fn ratio(&self) -> f64 {
        if self.total_docs == 0 {
            0.0
        } else {
            self.near_duplicate_set.len() as f64 / self.total_docs as f64
        }
    }

    /// `"<near duplicates> / <corpus size>"`, as in an accuracy table.
    pub fn ratio_label(&self) -> String {
        format!("{} / {}", self.near_duplicate_set.len(), self.total_docs)
    }

    /// Writes `groups.jsonl`, `removal.txt` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).at(dir)?;

        let groups_path = dir.join("groups.jsonl");
        let mut out = BufWriter::new(File::create(&groups_path).at(&groups_path)?);
        for g in &self.groups {
            serde_json::to_writer(&mut out, g).map_err(|e| Error::io(&groups_path, e.into()))?;
            out.write_all(b"\n").at(&groups_path)?;
        }
        out.flush().at(&groups_path)?;

        let removal_path = dir.join("removal.txt");
        let mut out = BufWriter::new(File::create(&removal_path).at(&removal_path)?);
        for id in &self.removal {
            writeln!(out, "{id}").at(&removal_path)?;
        }
        out.flush().at(&removal_path)?;

        let summary_path = dir.join("summary.json");
        let summary = serde_json::json!({
            "total_docs": self.total_docs,
            "ratio": self.ratio(),
            "ratio_label": self.ratio_label(),
            "counters": self.counters,
        });
        let mut bytes =
            serde_json::to_vec_pretty(&summary).map_err(|e| Error::io(&summary_path, e.into()))?;
        bytes.push(b'\n');
        std::fs::write(&summary_path, bytes).at(&summary_path)
    }
}

/// Near-duplicate set, removal list and counters for `groups`.
pub fn emit_report(groups: Vec<DuplicateGroup>, total_docs: u64) -> DedupReport {
    let mut near: Vec<u64> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    near.sort_unstable();
    let mut removal: Vec<u64> = groups
        .iter()
        .flat_map(|g| g.members.iter().copied().filter(move |&m| m != g.representative))
        .collect();
    removal.sort_unstable();
    let counters = DedupCounters {
        docs_scanned: total_docs,
        docs_kept: total_docs,
        distinct_pairs: 0,
        groups: groups.len() as u64,
        near_duplicates: near.len() as u64,
        removed: removal.len() as u64,
    };
    DedupReport {
        groups,
        near_duplicate_set: near,
        removal,
        total_docs,
        counters,
    }
}
