//! Resolution primitives: a resolver learns bits (or their XOR) held by a weak
//! committee. Many sessions run side by side; a session is one
//! (resolver, committee, index list) triple.

use std::collections::{HashMap, HashSet};

use super::Knowledge;
use crate::adversary::Step;
use crate::engine::{Budget, Sim};
use crate::error::{config, Result};
use crate::payload::{Envelope, MachineId, Payload};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub resolver: MachineId,
    /// Sorted committee; the resolver itself is skipped if present.
    pub committee: Vec<MachineId>,
    /// Sorted indices the committee knows.
    pub indices: Vec<usize>,
}

impl Session {
    fn members(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.committee.iter().copied().filter(move |&m| m != self.resolver)
    }
}

/// What machine `m` would claim for index `i`: its knowledge if honest, the
/// truth as a corrupted machine's template.
fn member_bit(sim: &Sim, know: &Knowledge, m: MachineId, i: usize) -> Option<bool> {
    if sim.is_byz(m) {
        Some(sim.ground_truth().get(i))
    } else {
        know.res[m][i]
    }
}

fn check_disjoint(sessions: &[Session], n: usize) -> Result<()> {
    let mut seen: HashSet<(MachineId, usize)> = HashSet::new();
    for s in sessions {
        for &i in &s.indices {
            if i >= n || !seen.insert((s.resolver, i)) {
                return config("sessions of one resolver must have disjoint index lists inside [0, n)");
            }
        }
    }
    Ok(())
}

/// Weak_Resolve. Members pipeline every (index, bit) to the resolver; the
/// resolver then walks its list, querying and blacklisting on disagreement.
/// Results land in `know.res[resolver]`.
pub fn weak_resolve(sim: &mut Sim, know: &mut Knowledge, sessions: &[Session]) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    check_disjoint(sessions, n)?;
    sim.message_round()?;
    let mut templates: Vec<Vec<Envelope>> = vec![Vec::new(); k];
    for s in sessions {
        for m in s.members() {
            for &i in &s.indices {
                if let Some(b) = member_bit(sim, know, m, i) {
                    templates[m].push(Envelope::to(s.resolver, Payload::Bit { index: i as u32, bit: b }));
                }
            }
        }
    }
    super::send_all(sim, &Step::Report, templates)?;
    let mb = sim.end_round(Budget::Actual)?;

    sim.begin_round()?;
    for s in sessions {
        let r = s.resolver;
        if sim.is_byz(r) {
            continue;
        }
        let members: HashSet<MachineId> = s.members().collect();
        let mut claims: HashMap<usize, Vec<(MachineId, bool)>> = HashMap::new();
        for (src, p) in mb.direct_to(r) {
            if let Payload::Bit { index, bit } = *p {
                if members.contains(&src) {
                    let c = claims.entry(index as usize).or_default();
                    if !c.contains(&(src, bit)) {
                        c.push((src, bit));
                    }
                }
            }
        }
        let before = sim.queries_of(r);
        for &i in &s.indices {
            let live: Vec<(MachineId, bool)> = claims
                .get(&i)
                .map(|c| c.iter().copied().filter(|&(m, _)| !sim.is_blacklisted(r, m)).collect())
                .unwrap_or_default();
            let ones = live.iter().filter(|x| x.1).count();
            let b = if live.is_empty() {
                sim.diag.flag("empty_committee");
                sim.query(r, i)?
            } else if ones == 0 || ones == live.len() {
                ones > 0
            } else {
                let b = sim.query(r, i)?;
                for &(m, v) in &live {
                    if v != b {
                        sim.blacklist(r, m);
                    }
                }
                b
            };
            know.res[r][i] = Some(b);
        }
        sim.diag.max("resolve_queries_max", (sim.queries_of(r) - before) as f64);
    }
    sim.finish_queries()?;
    Ok(())
}

/// `i`-th (0-based) index of `list` whose bit is `b` per `m`'s view, or `n`.
fn next_index(sim: &Sim, know: &Knowledge, m: MachineId, list: &[usize], b: bool, i: usize) -> usize {
    list.iter().copied().filter(|&j| member_bit(sim, know, m, j) == Some(b)).nth(i).unwrap_or(sim.n())
}

/// Fast_Weak_Resolve: the resolver asks for the next index holding b,
/// alternating b, until a sentinel closes the list.
pub fn fast_weak_resolve(sim: &mut Sim, know: &mut Knowledge, sessions: &[Session]) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    check_disjoint(sessions, n)?;
    let mut iteration = vec![0usize; sessions.len()];
    let mut active = vec![true; sessions.len()];
    let mut inbox: Vec<Option<Vec<(MachineId, usize)>>> = vec![None; sessions.len()];
    let start: Vec<u64> = (0..k).map(|m| sim.queries_of(m)).collect();
    loop {
        sim.begin_round()?;
        for (si, s) in sessions.iter().enumerate() {
            let Some(received) = inbox[si].take() else { continue };
            let r = s.resolver;
            if sim.is_byz(r) {
                continue;
            }
            let it = iteration[si] - 1;
            let b = it % 2 == 1;
            let in_list: HashSet<usize> = s.indices.iter().copied().collect();
            let mut set: Vec<usize> = Vec::new();
            for &(m, j) in &received {
                if j != n && !in_list.contains(&j) {
                    sim.blacklist(r, m);
                } else if !set.contains(&j) {
                    set.push(j);
                }
            }
            set.sort_unstable();
            if set.is_empty() && !sim.is_byz(r) {
                sim.diag.flag("empty_committee");
                for &x in &s.indices {
                    if know.res[r][x].is_none() {
                        let v = sim.query(r, x)?;
                        know.res[r][x] = Some(v);
                    }
                }
                continue;
            }
            let largest = set.last().copied();
            for &j in &set {
                if j == n {
                    for &x in &s.indices {
                        if know.res[r][x].is_none() {
                            know.res[r][x] = Some(!b);
                        }
                    }
                    break;
                }
                if know.res[r][j].is_some() {
                    continue;
                }
                let v = if Some(j) == largest { b } else { sim.query(r, j)? };
                know.res[r][j] = Some(v);
                if v == b {
                    for &(m, x) in &received {
                        if x != j {
                            sim.blacklist(r, m);
                        }
                    }
                    break;
                }
                for &(m, x) in &received {
                    if x == j {
                        sim.blacklist(r, m);
                    }
                }
            }
        }
        if !active.iter().any(|&a| a) {
            sim.finish_queries()?;
            break;
        }
        sim.begin_messages()?;
        // session order is the positional code on every link
        let mut sent: HashMap<(MachineId, MachineId), Vec<usize>> = HashMap::new();
        let mut offered = vec![false; k];
        for (si, s) in sessions.iter().enumerate() {
            if !active[si] {
                continue;
            }
            let it = iteration[si];
            let (b, i) = (it % 2 == 1, it / 2);
            let mut closing = false;
            for m in s.members() {
                let j = next_index(sim, know, m, &s.indices, b, i);
                let lie = next_index(sim, know, m, &s.indices, !b, i) as u32;
                if !sim.is_byz(m) && j == n {
                    closing = true;
                }
                sim.send(m, &Step::NextIndex { lie }, vec![Envelope::to(s.resolver, Payload::NextIndex(j as u32))])?;
                offered[m] = true;
                sent.entry((m, s.resolver)).or_default().push(si);
            }
            iteration[si] += 1;
            inbox[si] = Some(Vec::new());
            if closing || iteration[si] > 2 * s.indices.len() + 2 {
                active[si] = false;
            }
        }
        for m in 0..k {
            if sim.is_byz(m) && !offered[m] {
                sim.send(m, &Step::NextIndex { lie: n as u32 }, Vec::new())?;
            }
        }
        let mb = sim.end_round(Budget::Actual)?;
        let mut links: Vec<(MachineId, MachineId)> = sent.keys().copied().collect();
        links.sort_unstable();
        for (m, r) in links {
            if sim.is_byz(r) {
                continue;
            }
            let got: Vec<usize> = mb
                .direct_to(r)
                .filter_map(|(src, p)| match *p {
                    Payload::NextIndex(j) if src == m => Some(j as usize),
                    _ => None,
                })
                .collect();
            for (&si, &j) in sent[&(m, r)].iter().zip(&got) {
                if let Some(v) = inbox[si].as_mut() {
                    v.push((m, j.min(n)));
                }
            }
        }
    }
    for s in sessions {
        if !sim.is_byz(s.resolver) {
            sim.diag.max("resolve_queries_max", (sim.queries_of(s.resolver) - start[s.resolver]) as f64);
        }
    }
    Ok(())
}

/// Per-session Weak_Parity_Resolve state.
struct ParitySession {
    offset: usize,
    len: usize,
    /// (member, l, r) -> claimed XOR over positions l..=r, asked or deduced.
    claims: HashMap<(MachineId, usize, usize), bool>,
    ready_at: u64,
    result: Option<bool>,
}

enum Advance {
    Done,
    Ask(usize, usize, Vec<MachineId>),
}

fn xor_of(sim: &Sim, know: &Knowledge, m: MachineId, s: &Session, l: usize, r: usize) -> Option<bool> {
    let mut acc = false;
    for &i in &s.indices[l..=r] {
        acc ^= member_bit(sim, know, m, i)?;
    }
    Some(acc)
}

impl ParitySession {
    /// Runs the binary-search blacklisting as far as cached claims allow.
    fn advance(&mut self, sim: &mut Sim, s: &Session) -> Result<Advance> {
        let r0 = s.resolver;
        let last = self.len - 1;
        loop {
            let alive: Vec<MachineId> = s.members().filter(|&m| !sim.is_blacklisted(r0, m)).collect();
            // a member that skipped an asked window deviated
            let silent: Vec<MachineId> =
                alive.iter().copied().filter(|&m| !self.claims.contains_key(&(m, 0, last))).collect();
            if !silent.is_empty() {
                for m in silent {
                    sim.blacklist(r0, m);
                }
                continue;
            }
            if alive.is_empty() {
                sim.diag.flag("empty_committee");
                let mut acc = false;
                for &i in &s.indices {
                    acc ^= sim.query(r0, i)?;
                }
                self.result = Some(acc);
                return Ok(Advance::Done);
            }
            let total = self.claims[&(alive[0], 0, last)];
            if alive.iter().all(|&m| self.claims[&(m, 0, last)] == total) {
                self.result = Some(total);
                return Ok(Advance::Done);
            }
            let (mut l, mut r) = (0, last);
            let mut restart = false;
            while l != r {
                let mid = (l + r) / 2;
                let missing: Vec<MachineId> =
                    alive.iter().copied().filter(|&m| !self.claims.contains_key(&(m, l, mid))).collect();
                if !missing.is_empty() {
                    return Ok(Advance::Ask(l, mid, missing));
                }
                for &m in &alive {
                    let d = self.claims[&(m, l, r)] ^ self.claims[&(m, l, mid)];
                    self.claims.entry((m, mid + 1, r)).or_insert(d);
                }
                let first = self.claims[&(alive[0], l, mid)];
                if alive.iter().all(|&m| self.claims[&(m, l, mid)] == first) {
                    l = mid + 1;
                } else {
                    r = mid;
                }
            }
            let b = sim.query(r0, s.indices[l])?;
            for &m in &alive {
                if self.claims[&(m, l, l)] != b {
                    sim.blacklist(r0, m);
                    restart = true;
                }
            }
            if !restart {
                // cannot happen: the window was known to split the claims
                self.result = Some(total);
                return Ok(Advance::Done);
            }
        }
    }
}

/// Weak_Parity_Resolve for every session; returns the resolved XOR of each
/// session's list (`None` for corrupted resolvers).
///
/// Members volunteer XOR(whole list) and XOR(first half) in the first two
/// rounds; each further window costs an ask round and a reply round. Windows
/// travel as positions into the concatenation of the resolver's lists.
pub fn weak_parity_resolve(sim: &mut Sim, know: &Knowledge, sessions: &[Session]) -> Result<Vec<Option<bool>>> {
    let (n, k) = (sim.n(), sim.k());
    check_disjoint(sessions, n)?;
    if sessions.iter().any(|s| s.indices.is_empty()) {
        return config("weak_parity_resolve needs non-empty index lists");
    }
    let mut offsets: HashMap<MachineId, usize> = HashMap::new();
    let mut state: Vec<ParitySession> = sessions
        .iter()
        .map(|s| {
            let off = offsets.entry(s.resolver).or_insert(0);
            let st = ParitySession { offset: *off, len: s.indices.len(), claims: HashMap::new(), ready_at: 3, result: None };
            *off += s.indices.len();
            st
        })
        .collect();
    // per resolver, its sessions in order
    let mut by_resolver: HashMap<MachineId, Vec<usize>> = HashMap::new();
    for (si, s) in sessions.iter().enumerate() {
        by_resolver.entry(s.resolver).or_default().push(si);
    }
    // (member, resolver) -> windows (session, l, r) it was asked last round
    let mut asked_prev: HashMap<(MachineId, MachineId), Vec<(usize, usize, usize)>> = HashMap::new();
    let mut t = 0u64;
    loop {
        t += 1;
        sim.begin_round()?;
        let mut asks: Vec<(usize, usize, usize, Vec<MachineId>)> = Vec::new();
        if t >= 3 {
            for (si, s) in sessions.iter().enumerate() {
                let st = &mut state[si];
                if st.result.is_some() || sim.is_byz(s.resolver) || st.ready_at > t {
                    continue;
                }
                if let Advance::Ask(l, r, who) = st.advance(sim, s)? {
                    st.ready_at = t + 2;
                    asks.push((si, l, r, who));
                }
            }
        }
        let open = sessions.iter().enumerate().any(|(si, s)| !sim.is_byz(s.resolver) && state[si].result.is_none());
        if !open && asks.is_empty() && asked_prev.is_empty() {
            sim.finish_queries()?;
            break;
        }
        sim.begin_messages()?;
        // (member, resolver) -> windows answered this round, in send order
        let mut answered: HashMap<(MachineId, MachineId), Vec<(usize, usize, usize)>> = HashMap::new();
        if t <= 2 {
            for (si, s) in sessions.iter().enumerate() {
                let last = s.indices.len() - 1;
                let r = if t == 1 { last } else { last / 2 };
                for m in s.members() {
                    answered.entry((m, s.resolver)).or_default().push((si, 0, r));
                }
            }
        }
        for ((m, res), windows) in std::mem::take(&mut asked_prev) {
            answered.entry((m, res)).or_default().extend(windows);
        }
        let mut keys: Vec<(MachineId, MachineId)> = answered.keys().copied().collect();
        keys.sort_unstable();
        for &(m, res) in &keys {
            for &(si, l, r) in &answered[&(m, res)] {
                let s = &sessions[si];
                let off = state[si].offset;
                let b = xor_of(sim, know, m, s, l, r);
                let env = b.map(|b| vec![Envelope::to(res, Payload::Xor(b))]).unwrap_or_default();
                sim.send(m, &Step::XorClaim { l: off + l, r: off + r }, env)?;
            }
        }
        let mut queries: Vec<Vec<Envelope>> = vec![Vec::new(); k];
        for (si, l, r, who) in &asks {
            let s = &sessions[*si];
            let off = state[*si].offset;
            for &m in who {
                queries[s.resolver].push(Envelope::to(m, Payload::XorQuery { l: (off + l) as u32, r: (off + r) as u32 }));
            }
        }
        super::send_all(sim, &Step::Control, queries)?;
        let mb = sim.end_round(Budget::Actual)?;

        // replies, decoded by position on each link
        for &(m, res) in &keys {
            if sim.is_byz(res) {
                continue;
            }
            let got: Vec<bool> = mb
                .direct_to(res)
                .filter(|(src, p)| *src == m && matches!(p, Payload::Xor(_)))
                .filter_map(|(_, p)| p.bit())
                .collect();
            for (&(si, l, r), &b) in answered[&(m, res)].iter().zip(&got) {
                state[si].claims.entry((m, l, r)).or_insert(b);
            }
        }
        // queries members must answer next round
        for m in 0..k {
            for (src, p) in mb.direct_to(m) {
                let Payload::XorQuery { l, r } = *p else { continue };
                let (l, r) = (l as usize, r as usize);
                let Some(list) = by_resolver.get(&src) else { continue };
                for &si in list {
                    let st = &state[si];
                    if l >= st.offset && r < st.offset + st.len && l <= r && sessions[si].members().any(|x| x == m) {
                        asked_prev.entry((m, src)).or_default().push((si, l - st.offset, r - st.offset));
                        break;
                    }
                }
            }
        }
        if t > 4 * (k as u64 + 2) * (n as u64 + 2) {
            return Err(crate::SimError::Fault("weak_parity_resolve did not terminate".into()));
        }
    }
    Ok(sessions.iter().zip(&state).map(|(s, st)| if sim.is_byz(s.resolver) { None } else { st.result }).collect())
}
