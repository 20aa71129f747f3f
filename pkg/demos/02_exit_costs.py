"""Show how the on-chain cost of a unilateral exit grows with batch
size: logarithmic in transactions and virtual bytes."""

from arksim import footprint

print("shape calibration (vB):")
print(f"  commitment {footprint.vbytes(footprint.COMMITMENT_SHAPE)}")
print(f"  tree node  {footprint.vbytes(footprint.NODE_SHAPE)}")
print(f"  tree leaf  {footprint.vbytes(footprint.LEAF_SHAPE)}")

print("\nexit cost by batch size (fee rate 6 sat/vB):")
print(footprint.cost_table_csv([2 ** i for i in range(11)], 6))
