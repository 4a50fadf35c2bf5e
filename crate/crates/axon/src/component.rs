use std::sync::atomic::{AtomicU64, Ordering};

/// Process-unique identity for stateful components (neuron groups, synapses,
/// connections). Monitor deduplication keys on these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(u64);

impl ComponentId {
    pub(crate) fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(0);
        ComponentId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}
