use super::{Dataset, DomainRef, Interaction};

/// Sequence element: a vocabulary index, or the padding token that stands in
/// for an empty history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Pad,
    Id(usize),
}

/// Source-domain history of one user as seen at `cutoff_ts`.
///
/// `behavior_seq` holds source item indices in ascending time order (at most
/// `L`, never empty); `side_seq` holds the category of each of those items.
#[derive(Clone, Debug, PartialEq)]
pub struct UserContext {
    pub user: usize,
    pub behavior_seq: Vec<Token>,
    pub side_seq: Vec<Token>,
    /// Upper bound (exclusive) applied to event timestamps, when causal.
    pub cutoff_ts: Option<i64>,
}

impl UserContext {
    pub fn padding(user: usize, cutoff_ts: Option<i64>) -> Self {
        Self {
            user,
            behavior_seq: vec![Token::Pad],
            side_seq: vec![Token::Pad],
            cutoff_ts,
        }
    }

    pub fn len(&self) -> usize {
        self.behavior_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behavior_seq.is_empty()
    }

    pub fn is_padding(&self) -> bool {
        self.behavior_seq == [Token::Pad]
    }
}

fn make_context(
    user: usize,
    events: &[(i64, usize)],
    categories: &[Option<usize>],
    cutoff_ts: i64,
    max_len: usize,
    causal: bool,
) -> UserContext {
    let end = if causal {
        events.partition_point(|(ts, _)| *ts < cutoff_ts)
    } else {
        events.len()
    };
    let start = end.saturating_sub(max_len);
    let cutoff = causal.then_some(cutoff_ts);
    if start == end {
        return UserContext::padding(user, cutoff);
    }
    let window = &events[start..end];
    UserContext {
        user,
        behavior_seq: window.iter().map(|(_, item)| Token::Id(*item)).collect(),
        side_seq: window
            .iter()
            .map(|(_, item)| match categories.get(*item).copied().flatten() {
                Some(c) => Token::Id(c),
                None => Token::Pad,
            })
            .collect(),
        cutoff_ts: cutoff,
    }
}

/// Builds the context of `user` from an arbitrary slice of interactions.
///
/// Keeps source-domain events strictly before `cutoff_ts` when `causal`,
/// orders them by time (stable on ties) and retains the `max_len` most recent.
pub fn build_context(
    user: usize,
    records: &[Interaction],
    categories: &[Option<usize>],
    cutoff_ts: i64,
    max_len: usize,
    causal: bool,
) -> UserContext {
    let mut events: Vec<(i64, usize)> = records
        .iter()
        .filter(|r| r.user == user && r.domain == DomainRef::Source)
        .map(|r| (r.timestamp, r.item))
        .collect();
    events.sort_by_key(|(ts, _)| *ts);
    make_context(user, &events, categories, cutoff_ts, max_len, causal)
}

/// Per-user source events, pre-sorted so that contexts are a binary search away.
#[derive(Clone, Debug)]
pub struct SourceHistory {
    events: Vec<Vec<(i64, usize)>>,
    categories: Vec<Option<usize>>,
}

impl SourceHistory {
    pub fn new(data: &Dataset) -> Self {
        let mut events = vec![Vec::new(); data.vocab.users.len()];
        for r in &data.interactions {
            if r.domain == DomainRef::Source {
                events[r.user].push((r.timestamp, r.item));
            }
        }
        for e in &mut events {
            e.sort_by_key(|(ts, _)| *ts);
        }
        Self {
            events,
            categories: data.src_item_category.clone(),
        }
    }

    pub fn events(&self, user: usize) -> &[(i64, usize)] {
        self.events.get(user).map_or(&[], |e| e.as_slice())
    }

    pub fn context(&self, user: usize, cutoff_ts: i64, max_len: usize, causal: bool) -> UserContext {
        make_context(
            user,
            self.events(user),
            &self.categories,
            cutoff_ts,
            max_len,
            causal,
        )
    }
}
