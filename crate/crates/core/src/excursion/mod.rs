//! Lattice Brownian excursions and the coalescent read off their local times.

mod coalescent;
mod dump;
mod levels;
mod profile;
mod sample;

pub use coalescent::{
    excursion_coalescent, hat_coalescent, hat_partition, lookdown_split_events, ExcursionCoalescent, SplitEvent,
};
pub use dump::{read_path, write_path};
pub use levels::{
    decompose_above, heavy_count, partition_at_level, reduced_tree_counts, ExcursionRecord, LevelDecomposition,
};
pub use profile::{level_to_time, local_time_profile, time_change_u, time_change_v, LocalTimeProfile};
pub use sample::{lattice_size, sample_conditioned_excursion, sample_reflected_forest, LatticeExcursion, PathKind};

pub(crate) use coalescent::{scan_down, splits_between};
pub(crate) use levels::{site_of_level, Reference};
