//! Finite abelian groups, plane sets and the corner census.

mod census;
mod group;
mod plane;

pub use census::{
    census, census_for, census_oracle, census_with, max_popular_difference, CornerCensus, ORACLE_MAX_ORDER,
};
pub use group::{FiniteAbelianGroup, GroupDescriptor, MAX_GROUP_ORDER};
pub use plane::{PlaneSet, MAX_PLANE_ORDER};
