//! Shared identifier and value types.
//!
//! All prices are integer tick counts, all cash amounts integer minor
//! currency units, all quantities integer share counts. There is no
//! floating point anywhere in the trading path, so replaying the same
//! inputs is bit-exact.

use alloc::string::String;
use core::fmt;

/// Integer price in ticks (multiples of the instrument tick size).
pub type Price = u64;
/// Share quantity.
pub type Qty = u64;
/// Cash in minor currency units. Signed: the exchange pseudo-account may
/// run a negative balance, real agent accounts never do.
pub type Cash = i64;
/// Logical step assigned by the event sequencer.
pub type Step = u64;
/// Wall-clock milliseconds as reported by the host clock.
pub type WallTime = u64;

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
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

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }
    };
}

string_id!(
    /// Instrument symbol, e.g. `ERIC`.
    Symbol
);
string_id!(
    /// Agent identity. Assigned at registration, unique for the session.
    AgentId
);
string_id!(
    /// Broker identity.
    BrokerId
);
string_id!(
    /// Agent code developer identity (holder of a verification key).
    DeveloperId
);
string_id!(
    /// Latency class identity for dissemination subscriptions.
    ClassId
);
/// Reserved account owning all feed-seeded liquidity. Agents may not
/// register under this id.
pub const EXCHANGE_AGENT: &str = "EXCHANGE";

impl AgentId {
    pub fn exchange() -> Self {
        AgentId::new(EXCHANGE_AGENT)
    }
    pub fn is_exchange(&self) -> bool {
        self.0 == EXCHANGE_AGENT
    }
}

/// Server-assigned order identifier. Never reused.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Order side.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "BUY" => Some(Side::Buy),
            "SELL" => Some(Side::Sell),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
