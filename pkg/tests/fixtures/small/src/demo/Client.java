package demo;

import java.util.List;
import org.slf4j.Logger;

public class Client {
    private static final Logger LOG = null;
    private Store store = new Store();

    public void run(List<String> ids) {
        Helper.myLogHelper("start");
        ids.forEach(id -> LOG.warn("lambda " + id));
        store.put("b1", 3);
    }

    public void stop() {
        LOG.warn("shutting down");
    }

    public void idle() {
        store.count();
    }
}
