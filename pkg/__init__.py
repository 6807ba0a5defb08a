"""CAM freshness under decentralized congestion control."""
