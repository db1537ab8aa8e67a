//! Grouped human agents.
//!
//! Individual players answer too few questions to estimate skills, so
//! players are pooled into synthetic grouped agents. Groups are chosen to
//! maximize the union of items attempted, and a group's response to an item
//! is the strict majority of its members' responses, with tied votes broken
//! by a seeded coin flip.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MatrixEntry, Origin, ResponseMatrix};
use crate::error::{CoreError, Result};

/// Requested group sizes and count per size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub sizes: Vec<usize>,
    pub groups_per_size: usize,
    pub seed: u64,
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec {
            sizes: vec![1, 5, 10, 15],
            groups_per_size: 5,
            seed: 0,
        }
    }
}

impl GroupSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Config("group sizes must be positive".into()));
        }
        if self.groups_per_size == 0 {
            return Err(CoreError::Config("groups_per_size must be positive".into()));
        }
        Ok(())
    }

    pub fn players_needed(&self) -> usize {
        self.sizes.iter().sum::<usize>() * self.groups_per_size
    }
}

/// A synthetic agent pooling several players.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupedAgent {
    pub id: String,
    pub size: usize,
    pub members: Vec<String>,
}

struct DraftGroup {
    members: Vec<usize>,
    covered: BTreeSet<usize>,
    capacity: usize,
}

/// Assign players to groups, maximizing each group's item coverage.
///
/// Greedy draft: sizes are processed in the order given; the groups of a
/// size take turns picking (always the currently smallest group, lowest
/// index first), and each pick takes the unassigned player that adds the
/// most uncovered items to that group (ties: larger answered set, then
/// lower player id). Deterministic for fixed input.
pub fn form_groups(
    players: &[(String, BTreeSet<usize>)],
    spec: &GroupSpec,
) -> Result<Vec<GroupedAgent>> {
    spec.validate()?;
    if players.is_empty() {
        return Err(CoreError::Config("no players to group".into()));
    }
    let needed = spec.players_needed();
    if players.len() < needed {
        return Err(CoreError::Config(format!(
            "need {needed} players for {} groups but only {} available",
            spec.sizes.len() * spec.groups_per_size,
            players.len()
        )));
    }

    // Deterministic player ordering: answered-set size descending, id ascending.
    let mut order: Vec<usize> = (0..players.len()).collect();
    order.sort_by(|&a, &b| {
        players[b]
            .1
            .len()
            .cmp(&players[a].1.len())
            .then_with(|| players[a].0.cmp(&players[b].0))
    });
    let mut available: Vec<usize> = order;

    let mut agents = Vec::new();
    for &size in &spec.sizes {
        let mut groups: Vec<DraftGroup> = (0..spec.groups_per_size)
            .map(|_| DraftGroup {
                members: Vec::new(),
                covered: BTreeSet::new(),
                capacity: size,
            })
            .collect();
        while groups.iter().any(|g| g.members.len() < g.capacity) {
            // Smallest unfilled group picks next; lowest index on ties.
            let gi = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.members.len() < g.capacity)
                .min_by_key(|(idx, g)| (g.members.len(), *idx))
                .map(|(idx, _)| idx)
                .expect("unfilled group exists");
            let covered = &groups[gi].covered;
            let (pick_pos, _) = available
                .iter()
                .enumerate()
                .max_by(|(_, &pa), (_, &pb)| {
                    let ga = players[pa].1.difference(covered).count();
                    let gb = players[pb].1.difference(covered).count();
                    ga.cmp(&gb)
                        .then_with(|| players[pa].1.len().cmp(&players[pb].1.len()))
                        .then_with(|| players[pb].0.cmp(&players[pa].0))
                })
                .expect("players available");
            let player = available.remove(pick_pos);
            let set = &players[player].1;
            groups[gi].covered.extend(set.iter().copied());
            groups[gi].members.push(player);
        }
        for (idx, g) in groups.into_iter().enumerate() {
            agents.push(GroupedAgent {
                id: format!("group_s{size}_g{idx}"),
                size,
                members: g.members.iter().map(|&p| players[p].0.clone()).collect(),
            });
        }
    }
    Ok(agents)
}

/// Resolve one group vote: strict majority wins; ties are sampled with
/// probability equal to the vote mean (0.5 at a tie).
pub fn group_response(votes: &[bool], rng: &mut impl Rng) -> (bool, Origin) {
    assert!(!votes.is_empty(), "group_response requires votes");
    let ones = votes.iter().filter(|&&v| v).count();
    let zeros = votes.len() - ones;
    if ones > zeros {
        (true, Origin::GroupMajority)
    } else if zeros > ones {
        (false, Origin::GroupMajority)
    } else {
        let p = ones as f64 / votes.len() as f64;
        (rng.random_bool(p), Origin::GroupSampled)
    }
}

use crate::par::mix64;

fn cell_rng(seed: u64, group: usize, item: usize) -> ChaCha8Rng {
    let s = mix64(seed ^ mix64((group as u64) << 32 | item as u64));
    ChaCha8Rng::seed_from_u64(s)
}

/// Build a group-level response matrix from a player-level matrix.
///
/// Every (group, item) pair where at least one member has an entry gets a
/// majority-rule response. Tie draws use an RNG derived from the spec seed
/// and the (group, item) coordinates, so results do not depend on iteration
/// order.
pub fn apply_groups(
    matrix: &ResponseMatrix,
    groups: &[GroupedAgent],
    seed: u64,
) -> Result<ResponseMatrix> {
    let member_indices: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            g.members
                .iter()
                .map(|m| {
                    matrix.agent_index(m).ok_or_else(|| {
                        CoreError::Integrity(format!("group {} member {m} not in matrix", g.id))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let agent_ids: Vec<String> = groups.iter().map(|g| g.id.clone()).collect();
    let mut out = ResponseMatrix::new(agent_ids, matrix.items().to_vec())?;
    for (gi, members) in member_indices.iter().enumerate() {
        for item in 0..matrix.items().len() {
            let votes: Vec<bool> = members
                .iter()
                .filter_map(|&m| matrix.get(m, item))
                .map(|e| e.correct)
                .collect();
            if votes.is_empty() {
                continue;
            }
            let mut rng = cell_rng(seed, gi, item);
            let (correct, origin) = group_response(&votes, &mut rng);
            out.insert(gi, item, MatrixEntry { correct, origin })?;
        }
    }
    Ok(out)
}
