pub mod graphs;
pub mod oracle;
pub mod scorer;
