//! String identifiers shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Road network node (intersection or junction) identifier.
    NodeId
);
string_id!(
    /// Directed road segment identifier.
    EdgeId
);
string_id!(
    /// Signal controller identifier.
    ControllerId
);
string_id!(
    /// Signal approach identifier, unique within a controller.
    ApproachId
);

string_id!(
    /// Signal phase identifier.
    PhaseId
);
string_id!(
    /// Fleet unit identifier.
    AmbulanceId
);
string_id!(
    /// Emergency call identifier.
    IncidentId
);
string_id!(
    /// Receiving hospital identifier.
    HospitalId
);
