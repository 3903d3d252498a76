pub mod dynamics;
pub mod oracle;
