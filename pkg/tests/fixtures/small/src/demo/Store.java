package demo;

import org.slf4j.Logger;

public class Store {
    private static final Logger LOG = null;

    public void put(String blockId, int size) {
        LOG.info("Received block " + blockId);
        if (size > 0) {
            LOG.error("Deleting block {} file {}", blockId, size);
        }
    }

    public int count() {
        return 1 + 2;
    }
}
