package org.minidfs.util;

import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class AuditLogger {
    private static final Logger LOG = LoggerFactory.getLogger(AuditLogger.class);

    public static void audit(String cmd, String src) {
        LOG.info("audit cmd={} src={}", cmd, src);
    }
}
