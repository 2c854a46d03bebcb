"""TH-SS full-duplex backscatter networks: closed-form metrics and a chip-level simulator."""
