package org.minidfs.namenode;

import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class Balancer {
    private static final Logger LOG = LoggerFactory.getLogger(Balancer.class);
    private int pending;

    public void dispatch(String blockId) {
        if (pending > 0) {
            pending--;
            moveBlock(blockId);
        }
        LOG.info("Dispatcher finished, {} moves pending", pending);
    }

    void moveBlock(String blockId) {
        LOG.info("Moving block {}", blockId);
        dispatch(blockId);
    }
}
