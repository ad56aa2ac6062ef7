# Growth-fragmentation certificate toolkit