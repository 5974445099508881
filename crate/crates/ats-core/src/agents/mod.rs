//! Reference agents built on the shell: a momentum daytrader, a stop-loss
//! guard and a questionnaire-compiled template agent. Each doubles as an
//! end-to-end fixture for the scripted scenarios.

mod daytrader;
mod stoploss;
mod template;

pub use daytrader::{Daytrader, DaytraderConfig};
pub use stoploss::{StopLoss, StopLossConfig};
pub use template::{compile, CompileError, TemplateAgent, TemplateQuestionnaire, TemplateRule};
