package demo;

import org.slf4j.Logger;

public class Helper {
    private static final Logger LOG = null;

    public static void myLogHelper(String msg) {
        LOG.info("helper: " + msg);
    }

    public void quiet() {
        int x = 3;
    }
}
