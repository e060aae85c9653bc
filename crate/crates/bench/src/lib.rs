pub use tukey_em;
