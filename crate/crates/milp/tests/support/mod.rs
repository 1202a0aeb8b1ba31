pub mod rational_lp;
